"""DOVER-Lap style fusion of several overlap-aware diarization systems.

Systems are weighted by rank, mapped into a common label space and then
vote region by region. Two voting rules are available:

``original``
    emit the ``round(sum of supports)`` best-supported speakers.
``modified``
    emit every speaker whose support exceeds 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .scoring import der, optimal_mapping
from .timeline import Diarization, SpeakerTurn, write_rttm

MODES = ("original", "modified")
DEFAULT_RANK_EXPONENT = 0.5


@dataclass(frozen=True, eq=False)
class SystemWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i):
        return float(self.weights[i])


def _check_same_recording(systems: Sequence[Diarization]):
    ids = {d.recording_id for d in systems}
    if len(ids) > 1:
        raise ValueError(f"systems span several recordings: {sorted(ids)}")


def mean_pairwise_der(systems: Sequence[Diarization]) -> np.ndarray:
    """Mean DER of each system scored against every other one (collar 0)."""
    k = len(systems)
    out = np.zeros(k)
    for i in range(k):
        vals = []
        for j in range(k):
            if i != j:
                rep = der(systems[j], systems[i], collar=0.0, score_overlap=True)
                vals.append(1.0 if rep.der is None else rep.der)
        out[i] = np.mean(vals)
    return out


def rank_weights(scores: Sequence[float], exponent: float = DEFAULT_RANK_EXPONENT) -> SystemWeights:
    """Weights proportional to ``rank ** -exponent``, rank 1 for the lowest score.

    Tied scores share the mean of their ranks.
    """
    ranks = rankdata(np.round(np.asarray(scores, dtype=float), 12), method="average")
    w = ranks ** (-exponent)
    return SystemWeights(w / w.sum())


def rank_systems(systems: Sequence[Diarization], exponent: float = DEFAULT_RANK_EXPONENT) -> SystemWeights:
    if len(systems) < 2:
        raise ValueError("ranking needs at least two systems")
    _check_same_recording(systems)
    return rank_weights(mean_pairwise_der(systems), exponent)


def _canonical_order(systems: Sequence[Diarization], weights: SystemWeights) -> list[int]:
    # heaviest first; content breaks ties so input order never matters
    texts = [write_rttm([d]) for d in systems]
    return sorted(range(len(systems)), key=lambda i: (-round(weights[i], 12), texts[i]))


def map_labels_across_systems(
    systems: Sequence[Diarization], weights: SystemWeights | None = None
) -> list[Diarization]:
    """Relabel every system into the label space of the heaviest one.

    Labels with no counterpart in the anchor get fresh labels ``extraN``
    that clash with nothing. Output order follows the input.
    """
    if len(systems) < 2:
        raise ValueError("label mapping needs at least two systems")
    _check_same_recording(systems)
    if weights is None:
        weights = rank_systems(systems)
    order = _canonical_order(systems, weights)
    anchor = systems[order[0]]
    taken = {t.speaker for d in systems for t in d.turns}
    counter = 0
    out: list[Diarization | None] = [None] * len(systems)
    out[order[0]] = anchor
    for i in order[1:]:
        mapping = optimal_mapping(anchor, systems[i])
        for label in systems[i].speakers:
            if label not in mapping:
                while f"extra{counter}" in taken:
                    counter += 1
                mapping[label] = f"extra{counter}"
                taken.add(mapping[label])
        out[i] = systems[i].relabel(mapping)
    return out  # type: ignore[return-value]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def doverlap_vote(
    mapped: Sequence[Diarization], weights: SystemWeights, mode: str = "modified"
) -> Diarization:
    """Weighted per-region voting over label-mapped systems."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if len(mapped) != len(weights):
        raise ValueError("one weight per system required")
    _check_same_recording(mapped)
    rec = mapped[0].recording_id
    speakers = sorted({t.speaker for d in mapped for t in d.turns})
    bounds = sorted({b for d in mapped for t in d.turns for b in (t.start, t.end)})
    if len(bounds) < 2:
        return Diarization(rec)
    edges = np.array(bounds)
    mids = (edges[:-1] + edges[1:]) / 2.0

    col = {s: k for k, s in enumerate(speakers)}
    support = np.zeros((len(mids), len(speakers)))
    for d, w in zip(mapped, weights.weights):
        for t in d.turns:
            inside = (mids > t.start) & (mids < t.end)
            support[inside, col[t.speaker]] += w

    turns = []
    for r in range(len(mids)):
        row = support[r]
        if mode == "modified":
            chosen = [k for k in range(len(speakers)) if row[k] > 0.5 + 1e-12]
        else:
            n = _round_half_up(row.sum())
            ranked = sorted((k for k in range(len(speakers)) if row[k] > 0), key=lambda k: (-row[k], speakers[k]))
            chosen = ranked[:n]
        for k in chosen:
            turns.append(SpeakerTurn.make(edges[r], edges[r + 1], speakers[k]))
    return Diarization(rec, tuple(turns))


def fuse_systems(
    systems: Sequence[Diarization],
    mode: str = "modified",
    exponent: float = DEFAULT_RANK_EXPONENT,
) -> Diarization:
    """Rank, map and vote in one call."""
    weights = rank_systems(systems, exponent)
    mapped = map_labels_across_systems(systems, weights)
    return doverlap_vote(mapped, weights, mode)
