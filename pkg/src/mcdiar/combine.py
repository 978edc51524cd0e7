"""Merge per-channel diarization results into one overlap-bearing hypothesis."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .scoring import optimal_mapping
from .timeline import EPS, Diarization, overlap_duration


@dataclass(frozen=True)
class CombineReport:
    chosen_n: int
    used_channels: tuple[int, ...]  # 1-based positions in the input list
    skipped_channels: tuple[int, ...]


def majority_speaker_count(counts: Sequence[int]) -> int:
    """Most frequent value; ties go to the larger count."""
    tally = Counter(counts)
    return max(tally, key=lambda n: (tally[n], n))


def _project(channel: Diarization, acc: Diarization) -> dict[str, str]:
    mapping = optimal_mapping(acc, channel)
    acc_iv = acc.speaker_intervals()
    for label, ivs in sorted(channel.speaker_intervals().items()):
        if label in mapping:
            continue
        best, target = EPS, None
        for a in sorted(acc_iv):
            ov = overlap_duration(ivs, acc_iv[a])
            if ov > best:
                best, target = ov, a
        if target is not None:
            mapping[label] = target
    return mapping


def combine_channels(results: Sequence[Diarization]) -> tuple[Diarization, CombineReport]:
    """Combine channel results in input order.

    Channels whose speaker count differs from the majority count are
    skipped. The first remaining channel fixes the label space; each later
    one is mapped onto the running combination by optimal label assignment
    and its turns are unioned in per speaker. A label left unmapped joins
    the accumulated speaker it overlaps most and is dropped if it overlaps
    none.
    """
    if not results:
        raise ValueError("no channel results to combine")
    rec_ids = {d.recording_id for d in results}
    if len(rec_ids) != 1:
        raise ValueError(f"channel results span several recordings: {sorted(rec_ids)}")
    counts = [len(d.speakers) for d in results]
    n = majority_speaker_count(counts)

    acc: Diarization | None = None
    used, skipped = [], []
    for idx, (d, count) in enumerate(zip(results, counts), start=1):
        if count != n:
            skipped.append(idx)
            continue
        used.append(idx)
        if acc is None:
            acc = d
            continue
        mapping = _project(d, acc)
        kept = [t for t in d.turns if t.speaker in mapping]
        acc = Diarization(acc.recording_id, acc.turns + Diarization(d.recording_id, tuple(kept)).relabel(mapping).turns)
    assert acc is not None
    return acc, CombineReport(n, tuple(used), tuple(skipped))
