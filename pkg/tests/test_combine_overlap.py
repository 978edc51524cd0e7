import logging

import numpy as np
import pytest

from mcdiar.combine import combine_channels, majority_speaker_count
from mcdiar.embeddings import FrameTrack
from mcdiar.overlap import (
    WindowPosteriors,
    assign_overlap,
    fuse_posteriors,
    posteriors_to_segments,
)
from mcdiar.timeline import Diarization, Segment


def D(*items, rec="R"):
    return Diarization.from_tuples(rec, items)


def track(values, shift=0.008):
    return FrameTrack("R", shift, np.asarray(values, float).reshape(-1, 1))


# channel combination


def test_identical_channels_are_idempotent():
    d = D(("A", 0, 5), ("B", 4, 9), ("A", 10, 12))
    out, rep = combine_channels([d] * 8)
    assert out == d
    assert rep.skipped_channels == () and rep.used_channels == tuple(range(1, 9))


def test_majority_count_skips_odd_channel():
    two = D(("A", 0, 5), ("B", 5, 10))
    three = D(("A", 0, 3), ("B", 3, 6), ("C", 6, 10))
    _, rep = combine_channels([two, two, two, three])
    assert rep.chosen_n == 2 and rep.skipped_channels == (4,)
    assert majority_speaker_count([2, 3, 3, 2]) == 3


def test_projection_creates_overlap():
    ch1 = D(("A", 0, 5), ("B", 5, 10))
    ch2 = D(("X", 0, 5), ("Y", 4, 10))
    out, _ = combine_channels([ch1, ch2])
    assert out.speaker_intervals() == {"A": [(0.0, 5.0)], "B": [(4.0, 10.0)]}


def test_combined_support_is_union():
    rng = np.random.default_rng(0)
    for _ in range(20):
        base = D(("A", 0, 10), ("B", 10, 20), ("C", 20, 30))
        chans = []
        for _ in range(3):
            jit = rng.uniform(-1, 1, size=3)
            chans.append(D(("A", 0, 10 + jit[0]), ("B", 10 + jit[0], 20 + jit[1]), ("C", 20 + jit[1], 30 + jit[2])))
        out, _ = combine_channels(chans)
        want = Diarization("R", tuple(t for c in chans for t in c.turns)).support()
        assert out.support() == pytest.approx(want)
        assert len(out.speakers) == 3


def test_combine_errors():
    with pytest.raises(ValueError):
        combine_channels([])
    with pytest.raises(ValueError):
        combine_channels([D(("A", 0, 1)), D(("A", 0, 1), rec="S")])


# posterior fusion and segmentation


def test_fuse_examples():
    t = track([0.1, 0.9])
    assert np.array_equal(fuse_posteriors([t]).frames, t.frames)
    out = fuse_posteriors([track([0.4, 0.6]), track([0.8, 0.2])]).frames[:, 0]
    assert np.allclose(out, [0.6, 0.4])
    with pytest.raises(ValueError):
        fuse_posteriors([track(np.zeros(10)), track(np.zeros(11))])


def test_segments_examples():
    assert posteriors_to_segments(track(np.zeros(200))) == []
    short = np.zeros(200)
    short[:12] = 0.9
    assert posteriors_to_segments(track(short)) == []
    v = np.zeros(150, float)
    shift = 0.01
    v[0:50] = 1.0  # [0, 0.5]
    v[70:100] = 1.0  # [0.7, 1.0]
    segs = posteriors_to_segments(track(v, shift))
    assert [(s.start, s.end) for s in segs] == [(0.0, pytest.approx(1.0))]


def test_threshold_is_inclusive():
    v = np.zeros(100)
    v[10:40] = 0.5
    (seg,) = posteriors_to_segments(track(v, 0.01))
    assert seg.start == pytest.approx(0.1) and seg.end == pytest.approx(0.4)
    v[10:40] = 0.5 - 1e-9
    assert posteriors_to_segments(track(v, 0.01)) == []


# overlap assignment


def test_already_covered_unchanged():
    d = D(("A", 0, 5), ("B", 2, 4))
    assert assign_overlap(d, [Segment(2, 3)]) == d


def test_posterior_second_best_added():
    d = D(("A", 0, 5), ("B", 6, 8), ("C", 9, 12))
    starts = np.arange(0, 12, 0.5)
    ends = starts + 1.0
    q = np.tile([0.7, 0.1, 0.2], (len(starts), 1))
    q[(starts < 3) & (ends > 2)] = [0.6, 0.35, 0.05]
    post = WindowPosteriors(starts, ends, q, ("A", "B", "C"))
    out = assign_overlap(d, [Segment(2, 3)], post)
    assert out.speaker_intervals()["B"] == [(2.0, 3.0), (6.0, 8.0)]


def test_nearest_speaker_without_posteriors():
    d = D(("A", 2, 3), ("B", 1.0, 1.9), ("C", 0.0, 0.5))
    out = assign_overlap(d, [Segment(2, 3)])
    assert (2.0, 3.0) in out.speaker_intervals()["B"]
    assert out.speaker_intervals()["C"] == [(0.0, 0.5)]


def test_silence_and_single_speaker_cases(caplog):
    d = D(("A", 0, 1), ("B", 5, 6))
    assert assign_overlap(d, [Segment(2, 3)]) == d
    lone = D(("A", 0, 5))
    with caplog.at_level(logging.WARNING):
        assert assign_overlap(lone, [Segment(1, 2)]) == lone
    assert "fewer than two speakers" in caplog.text


def test_added_turns_clipped_to_segment():
    d = D(("A", 0, 10), ("B", 20, 30))
    out = assign_overlap(d, [Segment(4, 6)])
    assert out.speaker_intervals()["B"] == [(4.0, 6.0), (20.0, 30.0)]
