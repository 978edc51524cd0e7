"""Diarization scoring: DER, JER, overlap-detection P/R/F1 and label mapping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .timeline import (
    EPS,
    Diarization,
    Segment,
    intersect_intervals,
    overlap_duration,
    total_duration,
    union_intervals,
)

DEFAULT_COLLAR = 0.25


@dataclass(frozen=True)
class DerReport:
    scored_time: float
    missed: float
    false_alarm: float
    confusion: float
    der: float | None  # None when nothing was scored
    jer: float | None = None

    @property
    def defined(self) -> bool:
        return self.der is not None

    def format(self) -> str:
        """Fixed-order, two-decimal text report."""

        def pct(x):
            return "undefined" if x is None else f"{100.0 * x:.2f}"

        return (
            f"scored_time {self.scored_time:.2f}\n"
            f"missed {self.missed:.2f}\n"
            f"false_alarm {self.false_alarm:.2f}\n"
            f"confusion {self.confusion:.2f}\n"
            f"DER% {pct(self.der)}\n"
            f"JER% {pct(self.jer)}\n"
        )


def overlap_matrix(ref: Diarization, hyp: Diarization):
    """Pairwise speaker overlap durations, rows = sorted hyp labels, cols = sorted ref labels."""
    ref_iv = ref.speaker_intervals()
    hyp_iv = hyp.speaker_intervals()
    ref_labels = sorted(ref_iv)
    hyp_labels = sorted(hyp_iv)
    mat = np.zeros((len(hyp_labels), len(ref_labels)))
    for i, h in enumerate(hyp_labels):
        for j, r in enumerate(ref_labels):
            mat[i, j] = overlap_duration(hyp_iv[h], ref_iv[r])
    return mat, hyp_labels, ref_labels


def optimal_mapping(ref: Diarization, hyp: Diarization) -> dict[str, str]:
    """Injective hyp -> ref label map maximizing total overlapped time.

    Solved with the Hungarian method on the speaker-overlap matrix. Pairs
    with no overlap are left out since they do not change any error count.
    """
    mat, hyp_labels, ref_labels = overlap_matrix(ref, hyp)
    if mat.size == 0:
        return {}
    rows, cols = linear_sum_assignment(mat, maximize=True)
    return {
        hyp_labels[i]: ref_labels[j] for i, j in zip(rows, cols) if mat[i, j] > EPS
    }


def _activity(intervals: list[tuple[float, float]], mids: np.ndarray) -> np.ndarray:
    starts = np.array([s for s, _ in intervals])
    ends = np.array([e for _, e in intervals])
    idx = np.searchsorted(starts, mids, side="right") - 1
    active = idx >= 0
    active[active] = mids[active] < ends[idx[active]]
    return active


def _collar_zones(ref: Diarization, collar: float) -> list[tuple[float, float]]:
    if collar <= 0:
        return []
    half = collar / 2.0
    zones = []
    for t in ref.turns:
        for b in (t.start, t.end):
            zones.append((max(0.0, b - half), b + half))
    return union_intervals(zones)


def error_components(
    ref: Diarization,
    hyp: Diarization,
    mapping: dict[str, str],
    collar: float = DEFAULT_COLLAR,
    score_overlap: bool = True,
) -> tuple[float, float, float, float]:
    """(scored_time, missed, false_alarm, confusion) for a fixed mapping."""
    ref_iv = ref.speaker_intervals()
    hyp_iv = hyp.speaker_intervals()
    zones = _collar_zones(ref, collar)
    bounds = {0.0}
    for ivs in (*ref_iv.values(), *hyp_iv.values(), zones):
        for s, e in ivs:
            bounds.add(s)
            bounds.add(e)
    edges = np.array(sorted(bounds))
    if len(edges) < 2:
        return 0.0, 0.0, 0.0, 0.0
    dur = np.diff(edges)
    mids = edges[:-1] + dur / 2.0

    ref_act = {s: _activity(iv, mids) for s, iv in ref_iv.items()}
    hyp_act = {s: _activity(iv, mids) for s, iv in hyp_iv.items()}
    n_ref = sum(ref_act.values(), np.zeros(len(mids), dtype=int))
    n_hyp = sum(hyp_act.values(), np.zeros(len(mids), dtype=int))
    n_corr = np.zeros(len(mids), dtype=int)
    for h, r in mapping.items():
        if h in hyp_act and r in ref_act:
            n_corr += hyp_act[h] & ref_act[r]

    scored = np.ones(len(mids), dtype=bool)
    if zones:
        scored &= ~_activity(zones, mids)
    if not score_overlap:
        scored &= n_ref <= 1
    w = dur * scored
    scored_time = float(np.sum(w * n_ref))
    missed = float(np.sum(w * np.maximum(n_ref - n_hyp, 0)))
    false_alarm = float(np.sum(w * np.maximum(n_hyp - n_ref, 0)))
    confusion = float(np.sum(w * (np.minimum(n_ref, n_hyp) - n_corr)))
    return scored_time, missed, false_alarm, confusion


def der(
    ref: Diarization,
    hyp: Diarization,
    collar: float = DEFAULT_COLLAR,
    score_overlap: bool = True,
    with_jer: bool = False,
) -> DerReport:
    """Diarization error rate by exact interval arithmetic.

    ``collar / 2`` seconds on each side of every reference turn boundary
    are excluded. With ``score_overlap`` unset, regions where more than
    one reference speaker is active are not scored.
    """
    if collar < 0:
        raise ValueError("collar must be non-negative")
    mapping = optimal_mapping(ref, hyp)
    scored, missed, fa, conf = error_components(ref, hyp, mapping, collar, score_overlap)
    value = (missed + fa + conf) / scored if scored > EPS else None
    j = jer(ref, hyp, mapping) if with_jer else None
    return DerReport(scored, missed, fa, conf, value, j)


def jer(ref: Diarization, hyp: Diarization, mapping: dict[str, str] | None = None):
    """Jaccard error rate, averaged over reference speakers.

    Uses the DER-optimal mapping unless one is given. Returns None when the
    reference has no speakers.
    """
    if mapping is None:
        mapping = optimal_mapping(ref, hyp)
    ref_iv = ref.speaker_intervals()
    if not ref_iv:
        return None
    hyp_iv = hyp.speaker_intervals()
    inverse = {r: h for h, r in mapping.items()}
    errors = []
    for spk in sorted(ref_iv):
        h = inverse.get(spk)
        if h is None or h not in hyp_iv:
            errors.append(1.0)
            continue
        inter = overlap_duration(ref_iv[spk], hyp_iv[h])
        union = total_duration(union_intervals(ref_iv[spk] + hyp_iv[h]))
        errors.append(1.0 - inter / union)
    return float(np.mean(errors))


def _as_pairs(segs) -> list[tuple[float, float]]:
    return union_intervals(
        (s.start, s.end) if isinstance(s, Segment) else (float(s[0]), float(s[1])) for s in segs
    )


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def ovd_prf(ref_overlap: Sequence, hyp_overlap: Sequence) -> tuple[float, float, float]:
    """Duration-based precision, recall and F1 of detected overlap regions."""
    ref_iv = _as_pairs(ref_overlap)
    hyp_iv = _as_pairs(hyp_overlap)
    hit = total_duration(intersect_intervals(ref_iv, hyp_iv))
    hyp_total = total_duration(hyp_iv)
    ref_total = total_duration(ref_iv)
    precision = hit / hyp_total if hyp_total > 0 else 0.0
    recall = hit / ref_total if ref_total > 0 else 0.0
    return precision, recall, f1_score(precision, recall)


def overlap_regions(d: Diarization) -> list[tuple[float, float]]:
    """Regions where two or more speakers of ``d`` are active."""
    events = []
    for t in d.turns:
        events.append((t.start, 1))
        events.append((t.end, -1))
    events.sort(key=lambda x: (x[0], x[1]))
    out = []
    level = 0
    opened = 0.0
    for time, delta in events:
        before = level
        level += delta
        if before < 2 <= level:
            opened = time
        elif before >= 2 > level and time - opened > EPS:
            out.append((opened, time))
    return union_intervals(out)
