import numpy as np
import pytest

from mcdiar.scoring import der, f1_score, jer, optimal_mapping, ovd_prf, overlap_regions
from mcdiar.timeline import Diarization, Segment
from conftest import brute_der, brute_mapping_value, frame_activity, random_diarization


def D(*items, rec="R"):
    return Diarization.from_tuples(rec, items)


def test_identity_mapping():
    d = D(("A", 0, 5), ("B", 4, 9))
    assert optimal_mapping(d, d) == {"A": "A", "B": "B"}


def test_swapped_mapping():
    ref = D(("A", 0, 5), ("B", 5, 10))
    hyp = D(("X", 5, 10), ("Y", 0, 5))
    assert optimal_mapping(ref, hyp) == {"X": "B", "Y": "A"}


def test_extra_hyp_speaker_left_unmapped_and_optimal():
    rng = np.random.default_rng(3)
    ref = D(("A", 0, 5), ("B", 5, 10))
    hyp = D(("X", 0, 4), ("Y", 4, 7), ("Z", 7, 10))
    mapping = optimal_mapping(ref, hyp)
    assert len(mapping) == 2
    n = 10001
    _, ra = frame_activity(ref, n)
    hs, ha = frame_activity(hyp, n)
    best, m = brute_mapping_value(ra, ha)
    got = sum(m[ref.speakers.index(r), hs.index(h)] for h, r in mapping.items())
    assert got == best


def test_der_identical_is_zero():
    d = D(("A", 0, 5), ("B", 4, 9))
    rep = der(d, d, collar=0.0)
    assert rep.der == 0.0


def test_der_missed_tail():
    rep = der(D(("A", 0, 10)), D(("X", 0, 8)), collar=0.0)
    assert rep.missed == pytest.approx(2.0)
    assert rep.der == pytest.approx(0.2)


def test_der_missed_overlap_speaker():
    rep = der(D(("A", 0, 10), ("B", 0, 10)), D(("X", 0, 10)), collar=0.0)
    assert rep.scored_time == pytest.approx(20.0)
    assert rep.missed == pytest.approx(10.0)
    assert rep.der == pytest.approx(0.5)


def test_der_skip_overlap():
    ref = D(("A", 0, 10), ("B", 5, 10))
    rep = der(ref, D(("X", 0, 10)), collar=0.0, score_overlap=False)
    assert rep.scored_time == pytest.approx(5.0)
    assert rep.der == pytest.approx(0.0)


def test_der_collar_excludes_boundaries():
    rep = der(D(("A", 1, 10)), D(("X", 1.1, 10)), collar=0.25)
    assert rep.der == pytest.approx(0.0)


def test_empty_reference_is_undefined():
    rep = der(Diarization("R"), D(("X", 0, 1)))
    assert rep.der is None
    assert "undefined" in rep.format()


def test_report_format_order():
    rep = der(D(("A", 0, 10)), D(("X", 0, 8)), collar=0.0, with_jer=True)
    keys = [line.split()[0] for line in rep.format().splitlines()]
    assert keys == ["scored_time", "missed", "false_alarm", "confusion", "DER%", "JER%"]
    assert "DER% 20.00" in rep.format()


@pytest.mark.parametrize("collar,overlap", [(0.0, True), (0.25, True), (0.5, False)])
def test_der_matches_frame_oracle(collar, overlap):
    rng = np.random.default_rng(11)
    for _ in range(20):
        ref = random_diarization(rng, 4, 20.0)
        hyp = random_diarization(rng, 4, 20.0)
        rep = der(ref, hyp, collar=collar, score_overlap=overlap)
        tot, miss, fa, conf = brute_der(ref, hyp, collar, overlap)
        assert rep.scored_time == pytest.approx(tot, abs=1e-6)
        assert rep.missed == pytest.approx(miss, abs=1e-6)
        assert rep.false_alarm == pytest.approx(fa, abs=1e-6)
        assert rep.confusion == pytest.approx(conf, abs=1e-6)


def test_jer_examples():
    d = D(("A", 0, 10))
    assert jer(d, d) == 0.0
    assert jer(D(("A", 0, 10)), D(("X", 5, 15))) == pytest.approx(1 - 5 / 15)
    assert jer(D(("A", 0, 10), ("B", 20, 30)), D(("X", 0, 10))) == pytest.approx(0.5)


def test_ovd_prf_examples():
    assert ovd_prf([Segment(0, 10)], [Segment(0, 10)]) == pytest.approx((1, 1, 1))
    assert ovd_prf([(0, 10)], [(5, 15)]) == pytest.approx((0.5, 0.5, 0.5))


def test_f1_formula():
    assert f1_score(0.894, 0.651) == pytest.approx(0.753, abs=5e-4)
    assert f1_score(0.0, 0.0) == 0.0


def test_overlap_regions():
    d = D(("A", 0, 5), ("B", 4, 9), ("C", 8.5, 12))
    assert overlap_regions(d) == [(4.0, 5.0), (8.5, 9.0)]
