"""Overlapped-speech post-processing.

Detector posteriors are averaged, thresholded and smoothed into overlap
segments, which are then used to give single-speaker regions a second
speaker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import FrameTrack
from .timeline import EPS, Diarization, Segment, SpeakerTurn, intersect_intervals

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_SILENCE = 0.3
DEFAULT_MIN_OVERLAP = 0.1


@dataclass(frozen=True, eq=False)
class WindowPosteriors:
    """Per-window speaker posteriors with the window times and column labels."""

    starts: np.ndarray
    ends: np.ndarray
    q: np.ndarray  # (T, S)
    speakers: tuple[str, ...]  # label of each column of q


def fuse_posteriors(tracks: Sequence[FrameTrack]) -> FrameTrack:
    """Frame-wise mean of several scalar overlap-posterior tracks."""
    if not tracks:
        raise ValueError("need at least one track")
    first = tracks[0]
    for t in tracks:
        if t.dim != 1:
            raise ValueError("overlap tracks must be one-dimensional")
        if t.recording_id != first.recording_id:
            raise ValueError("tracks belong to different recordings")
        if abs(t.frame_shift - first.frame_shift) > EPS:
            raise ValueError("frame shift mismatch")
        if len(t) != len(first):
            raise ValueError(f"track length mismatch ({len(t)} vs {len(first)})")
    mean = np.mean([t.frames for t in tracks], axis=0)
    return FrameTrack(first.recording_id, first.frame_shift, mean)


def _runs(active: np.ndarray) -> list[tuple[int, int]]:
    # half-open [i, j) frame runs of True values
    padded = np.concatenate([[False], active, [False]])
    diff = np.diff(padded.astype(int))
    return list(zip(np.flatnonzero(diff == 1), np.flatnonzero(diff == -1)))


def posteriors_to_segments(
    track: FrameTrack,
    threshold: float = DEFAULT_THRESHOLD,
    min_silence: float = DEFAULT_MIN_SILENCE,
    min_overlap: float = DEFAULT_MIN_OVERLAP,
) -> list[Segment]:
    """Threshold (inclusive), fill short gaps, then drop short segments."""
    if track.dim != 1:
        raise ValueError("expected a one-dimensional posterior track")
    shift = track.frame_shift
    runs = _runs(track.frames[:, 0] >= threshold)
    filled: list[list[int]] = []
    for i, j in runs:
        if filled and (i - filled[-1][1]) * shift < min_silence - EPS:
            filled[-1][1] = j
        else:
            filled.append([int(i), int(j)])
    return [
        Segment(i * shift, j * shift)
        for i, j in filled
        if (j - i) * shift >= min_overlap - EPS
    ]


def _active_speakers(d: Diarization, seg: tuple[float, float]) -> list[str]:
    return sorted(
        {t.speaker for t in d.turns if min(t.end, seg[1]) - max(t.start, seg[0]) > EPS}
    )


def _nearest_speaker(d: Diarization, seg: tuple[float, float], exclude: str) -> str | None:
    best = None
    for t in d.turns:
        if t.speaker == exclude:
            continue
        gap = max(seg[0] - t.end, t.start - seg[1], 0.0)
        key = (gap, t.speaker)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def _posterior_speaker(
    post: WindowPosteriors, seg: tuple[float, float], exclude: str, allowed: set[str]
) -> str | None:
    covering = (post.starts < seg[1]) & (post.ends > seg[0])
    if not np.any(covering):
        return None
    mean = post.q[covering].mean(axis=0)
    ranked = sorted(range(len(mean)), key=lambda k: (-mean[k], post.speakers[k]))
    for k in ranked:
        if post.speakers[k] != exclude and post.speakers[k] in allowed:
            return post.speakers[k]
    return None


def assign_overlap(
    d: Diarization,
    overlaps: Sequence[Segment],
    posteriors: WindowPosteriors | None = None,
) -> Diarization:
    """Make every detected overlap region carry at least two speakers.

    Where exactly one speaker is active inside an overlap segment, the
    speaker with the highest mean window posterior among the others (the
    runner-up to the active one) is added for the extent of the segment.
    Without posteriors, or when they cover nothing, the other speaker
    closest in time is used. Segments with zero or several active speakers
    are left alone.
    """
    if len(d.speakers) < 2:
        logger.warning("%s: fewer than two speakers, overlap assignment skipped", d.recording_id)
        return d
    present = set(d.speakers)
    added = []
    for seg in overlaps:
        span = (seg.start, seg.end) if isinstance(seg, Segment) else (float(seg[0]), float(seg[1]))
        active = _active_speakers(d, span)
        if len(active) != 1:
            continue
        (main,) = active
        second = None
        if posteriors is not None:
            second = _posterior_speaker(posteriors, span, main, present)
        if second is None:
            second = _nearest_speaker(d, span, main)
        if second is not None:
            added.append(SpeakerTurn.make(span[0], span[1], second))
    if not added:
        return d
    return Diarization(d.recording_id, d.turns + tuple(added))


def overlap_diarization(recording_id: str, segments: Sequence[Segment], label: str = "overlap") -> Diarization:
    """Wrap overlap segments as a pseudo-speaker diarization for RTTM output."""
    return Diarization(recording_id, tuple(SpeakerTurn(s, label) for s in segments))


def overlap_segments_from(d: Diarization) -> list[Segment]:
    return [Segment(s, e) for s, e in d.support()]


def clip(d: Diarization, start: float, end: float) -> Diarization:
    """Restrict a diarization to ``[start, end]``."""
    turns = []
    for spk, ivs in d.speaker_intervals().items():
        for s, e in intersect_intervals(ivs, [(start, end)]):
            turns.append(SpeakerTurn.make(s, e, spk))
    return Diarization(d.recording_id, tuple(turns))
