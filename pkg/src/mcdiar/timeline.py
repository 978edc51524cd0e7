"""Speaker-turn data model, interval helpers and RTTM reading/writing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

EPS = 1e-9


class ParseError(ValueError):
    """Raised for malformed input files; carries the 1-based line number."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True, order=True)
class Segment:
    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError(f"non-finite segment bounds ({self.start}, {self.end})")
        if self.start < 0:
            raise ValueError(f"negative segment start {self.start}")
        if self.end <= self.start:
            raise ValueError(f"empty or reversed segment ({self.start}, {self.end})")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SpeakerTurn:
    segment: Segment
    speaker: str

    def __post_init__(self):
        if not self.speaker or any(c.isspace() for c in self.speaker):
            raise ValueError(f"invalid speaker label {self.speaker!r}")

    @property
    def start(self) -> float:
        return self.segment.start

    @property
    def end(self) -> float:
        return self.segment.end

    @classmethod
    def make(cls, start: float, end: float, speaker: str) -> "SpeakerTurn":
        return cls(Segment(float(start), float(end)), speaker)


@dataclass(frozen=True)
class Diarization:
    """Labeled speech regions of one recording.

    Turns are kept normalized: sorted by ``(start, speaker)`` and with
    overlapping or abutting turns of the same speaker merged. Different
    speakers may overlap.
    """

    recording_id: str
    turns: tuple[SpeakerTurn, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(normalize_turns(self.turns)))

    @classmethod
    def from_tuples(cls, recording_id: str, items: Iterable[tuple[str, float, float]]):
        """Build from ``(speaker, start, end)`` tuples."""
        return cls(recording_id, tuple(SpeakerTurn.make(s, e, spk) for spk, s, e in items))

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker for t in self.turns})

    def speaker_intervals(self) -> dict[str, list[tuple[float, float]]]:
        out: dict[str, list[tuple[float, float]]] = {}
        for t in self.turns:
            out.setdefault(t.speaker, []).append((t.start, t.end))
        return out

    def speaker_durations(self) -> dict[str, float]:
        return {s: total_duration(iv) for s, iv in self.speaker_intervals().items()}

    def support(self) -> list[tuple[float, float]]:
        """Union of all speech regions regardless of speaker."""
        return union_intervals((t.start, t.end) for t in self.turns)

    def relabel(self, mapping: dict[str, str]) -> "Diarization":
        """Rename speakers; labels missing from ``mapping`` are kept."""
        return Diarization(
            self.recording_id,
            tuple(SpeakerTurn(t.segment, mapping.get(t.speaker, t.speaker)) for t in self.turns),
        )

    def end_time(self) -> float:
        return max((t.end for t in self.turns), default=0.0)


# ---------------------------------------------------------------------------
# interval helpers, all on lists of (start, end) float pairs


def union_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Merge overlapping or abutting intervals (gap <= EPS)."""
    out: list[list[float]] = []
    for s, e in sorted(intervals):
        if out and s <= out[-1][1] + EPS:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [(s, e) for s, e in out]


def intersect_intervals(
    a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Intersection of two normalized interval lists."""
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        s = max(a[i][0], b[j][0])
        e = min(a[i][1], b[j][1])
        if e - s > EPS:
            out.append((s, e))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def subtract_intervals(
    a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Parts of normalized list ``a`` not covered by normalized list ``b``."""
    out = []
    j = 0
    for s, e in a:
        cur = s
        while j < len(b) and b[j][1] <= cur:
            j += 1
        k = j
        while k < len(b) and b[k][0] < e:
            if b[k][0] - cur > EPS:
                out.append((cur, b[k][0]))
            cur = max(cur, b[k][1])
            k += 1
        if e - cur > EPS:
            out.append((cur, e))
    return out


def total_duration(intervals: Iterable[tuple[float, float]]) -> float:
    return float(sum(e - s for s, e in intervals))


def overlap_duration(
    a: Sequence[tuple[float, float]], b: Sequence[tuple[float, float]]
) -> float:
    return total_duration(intersect_intervals(a, b))


def normalize_turns(turns: Iterable[SpeakerTurn]) -> list[SpeakerTurn]:
    by_spk: dict[str, list[tuple[float, float]]] = {}
    for t in turns:
        by_spk.setdefault(t.speaker, []).append((t.start, t.end))
    out = [
        SpeakerTurn(Segment(s, e), spk)
        for spk, ivs in by_spk.items()
        for s, e in union_intervals(ivs)
    ]
    out.sort(key=lambda t: (t.start, t.speaker, t.end))
    return out


# ---------------------------------------------------------------------------
# RTTM


def parse_rttm(text: str) -> list[Diarization]:
    """Parse an RTTM document into one :class:`Diarization` per recording.

    Only ``SPEAKER`` records are accepted. Lines starting with ``#`` and
    blank lines are skipped. Recordings are returned sorted by id.
    """
    per_rec: dict[str, list[SpeakerTurn]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 9:
            raise ParseError(f"expected at least 9 fields, got {len(fields)}", lineno)
        if fields[0] != "SPEAKER":
            raise ParseError(f"unsupported record type {fields[0]!r}", lineno)
        try:
            onset = float(fields[3])
            dur = float(fields[4])
        except ValueError:
            raise ParseError("onset/duration are not numbers", lineno) from None
        if not (math.isfinite(onset) and math.isfinite(dur)):
            raise ParseError("non-finite onset/duration", lineno)
        if dur < 0:
            raise ParseError(f"negative duration {dur}", lineno)
        if onset < 0:
            raise ParseError(f"negative onset {onset}", lineno)
        if dur == 0:
            # zero-length records carry no speech
            per_rec.setdefault(fields[1], [])
            continue
        try:
            turn = SpeakerTurn.make(onset, onset + dur, fields[7])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        per_rec.setdefault(fields[1], []).append(turn)
    return [Diarization(rec, tuple(turns)) for rec, turns in sorted(per_rec.items())]


def _ms(x: float) -> int:
    return math.floor(x * 1000.0 + 0.5)


def format_rttm_line(recording_id: str, turn: SpeakerTurn) -> str:
    # start and end are rounded independently so both stay within 0.5 ms
    start_ms = _ms(turn.start)
    dur_ms = _ms(turn.end) - start_ms
    return (
        f"SPEAKER {recording_id} 1 {start_ms // 1000}.{start_ms % 1000:03d} "
        f"{dur_ms // 1000}.{dur_ms % 1000:03d} <NA> <NA> {turn.speaker} <NA> <NA>"
    )


def write_rttm(diarizations: Iterable[Diarization]) -> str:
    lines = []
    for d in sorted(diarizations, key=lambda d: d.recording_id):
        for t in d.turns:
            lines.append(format_rttm_line(d.recording_id, t))
    return "".join(line + "\n" for line in lines)


def read_rttm_file(path) -> list[Diarization]:
    with open(path, encoding="utf-8") as f:
        return parse_rttm(f.read())


def write_rttm_file(path, diarizations: Iterable[Diarization]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_rttm(diarizations))
