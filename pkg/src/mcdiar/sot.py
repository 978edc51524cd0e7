"""First-in-first-out serialization of multi-speaker transcripts."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .timeline import ParseError

SPEAKER_CHANGE = "<sc>"
END_OF_SEQUENCE = "<eos>"


@dataclass(frozen=True)
class Utterance:
    start: float
    end: float
    speaker: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)) or self.end <= self.start:
            raise ValueError(f"invalid utterance times ({self.start}, {self.end})")
        if not self.tokens:
            raise ValueError("utterance without tokens")
        object.__setattr__(self, "tokens", tuple(self.tokens))


def serialize_sot(utts) -> list[str]:
    """Concatenate utterances by start time with ``<sc>`` between them and a final ``<eos>``.

    Equal start times are ordered by speaker label, then by input position.
    """
    utts = list(utts)
    if not utts:
        raise ValueError("nothing to serialize")
    order = sorted(range(len(utts)), key=lambda i: (utts[i].start, utts[i].speaker, i))
    out: list[str] = []
    for n, i in enumerate(order):
        if n:
            out.append(SPEAKER_CHANGE)
        out.extend(utts[i].tokens)
    out.append(END_OF_SEQUENCE)
    return out


def parse_transcript(text: str) -> list[Utterance]:
    """Read ``<start> <end> <speaker> <token> [<token> ...]`` lines."""
    utts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 4:
            raise ParseError("expected '<start> <end> <speaker> <token> ...'", lineno)
        try:
            utts.append(Utterance(float(fields[0]), float(fields[1]), fields[2], tuple(fields[3:])))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return utts
