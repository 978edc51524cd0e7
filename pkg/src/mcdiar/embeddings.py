"""Embedding, frame-track and PLDA files plus PLDA scoring.

Three line-oriented text formats are handled here (UTF-8, ``#`` comments):

* ``EMB1 <rec_id> <channel> <D> <win_len> <win_shift>`` followed by
  ``<start> <end> <v1> ... <vD>`` lines.
* ``TRK1 <rec_id> <frame_shift> <dim>`` followed by
  ``<frame_idx> <p1> ... <pdim>`` lines, indices contiguous from 0.
* ``PLDA1 <D> <R>`` followed by the mean line, R transform rows and the
  between-class variance line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .timeline import ParseError


@dataclass(frozen=True, eq=False)
class EmbeddingSequence:
    recording_id: str
    channel: int
    win_len: float
    win_shift: float
    starts: np.ndarray  # (T,)
    ends: np.ndarray  # (T,)
    vectors: np.ndarray  # (T, D)
    preprocessed: bool = False

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=float).reshape(-1)
        ends = np.asarray(self.ends, dtype=float).reshape(-1)
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            vectors = vectors.reshape(len(starts), -1)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "vectors", vectors)
        if not 1 <= self.channel <= 8:
            raise ValueError(f"channel {self.channel} outside 1..8")
        if len(starts) != len(ends) or len(starts) != len(vectors):
            raise ValueError("starts, ends and vectors disagree in length")
        if np.any(np.diff(starts) < 0):
            raise ValueError("windows not sorted by start")
        if np.any(ends - starts > self.win_len + 1e-6) or np.any(ends <= starts):
            raise ValueError("window duration outside (0, win_len]")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("non-finite embedding values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.starts)

    @property
    def centers(self) -> np.ndarray:
        return (self.starts + self.ends) / 2.0


@dataclass(frozen=True, eq=False)
class FrameTrack:
    recording_id: str
    frame_shift: float
    frames: np.ndarray  # (T, dim)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim == 1:
            frames = frames[:, None]
        object.__setattr__(self, "frames", frames)
        if not self.frame_shift > 0:
            raise ValueError("frame_shift must be positive")
        if frames.size and (np.any(frames < 0) or np.any(frames > 1) or not np.all(np.isfinite(frames))):
            raise ValueError("posteriors must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.frame_shift


@dataclass(frozen=True, eq=False)
class PLDAModel:
    """Two-covariance PLDA in a diagonalized space.

    After ``transform @ (x - mean)`` the within-class covariance is the
    identity and the between-class covariance is ``diag(phi)``.
    """

    mean: np.ndarray  # (D,)
    transform: np.ndarray  # (R, D)
    phi: np.ndarray  # (R,)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        transform = np.atleast_2d(np.asarray(self.transform, dtype=float))
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "transform", transform)
        object.__setattr__(self, "phi", phi)
        if transform.shape != (len(phi), len(mean)):
            raise ValueError(f"transform shape {transform.shape} != ({len(phi)}, {len(mean)})")
        if len(phi) < 1 or len(phi) > len(mean):
            raise ValueError("need 1 <= R <= D")
        if np.any(phi < 0):
            raise ValueError("phi must be non-negative")
        if not (np.all(np.isfinite(transform)) and np.all(np.isfinite(mean))):
            raise ValueError("non-finite PLDA parameters")

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def rank(self) -> int:
        return len(self.phi)


# ---------------------------------------------------------------------------
# text formats


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line.split()


def _floats(fields, lineno) -> list[float]:
    try:
        values = [float(x) for x in fields]
    except ValueError:
        raise ParseError("expected decimal numbers", lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise ParseError("non-finite value", lineno)
    return values


def read_embeddings(text: str) -> EmbeddingSequence:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("missing EMB1 header", 1)
    lineno, head = lines[0]
    if head[0] != "EMB1" or len(head) != 6:
        raise ParseError("expected 'EMB1 <rec_id> <channel> <D> <win_len> <win_shift>'", lineno)
    try:
        channel, dim = int(head[2]), int(head[3])
    except ValueError:
        raise ParseError("channel and dimension must be integers", lineno) from None
    win_len, win_shift = _floats(head[4:6], lineno)
    if dim < 1:
        raise ParseError("dimension must be positive", lineno)
    starts, ends, vecs = [], [], []
    for lineno, fields in lines[1:]:
        if len(fields) != dim + 2:
            raise ParseError(f"expected {dim + 2} fields, got {len(fields)}", lineno)
        values = _floats(fields, lineno)
        starts.append(values[0])
        ends.append(values[1])
        vecs.append(values[2:])
    try:
        return EmbeddingSequence(
            head[1], channel, win_len, win_shift,
            np.array(starts), np.array(ends), np.array(vecs).reshape(len(vecs), dim),
        )
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def write_embeddings(e: EmbeddingSequence) -> str:
    out = [f"EMB1 {e.recording_id} {e.channel} {e.dim} {e.win_len!r} {e.win_shift!r}"]
    for s, t, v in zip(e.starts, e.ends, e.vectors):
        out.append(" ".join([f"{s:.3f}", f"{t:.3f}", *(repr(float(x)) for x in v)]))
    return "\n".join(out) + "\n"


def read_frame_track(text: str) -> FrameTrack:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("missing TRK1 header", 1)
    lineno, head = lines[0]
    if head[0] != "TRK1" or len(head) != 4:
        raise ParseError("expected 'TRK1 <rec_id> <frame_shift> <dim>'", lineno)
    (shift,) = _floats(head[2:3], lineno)
    try:
        dim = int(head[3])
    except ValueError:
        raise ParseError("dimension must be an integer", lineno) from None
    if shift <= 0 or dim < 1:
        raise ParseError("frame_shift and dim must be positive", lineno)
    rows = []
    for lineno, fields in lines[1:]:
        if len(fields) != dim + 1:
            raise ParseError(f"expected {dim + 1} fields, got {len(fields)}", lineno)
        try:
            idx = int(fields[0])
        except ValueError:
            raise ParseError("frame index must be an integer", lineno) from None
        if idx != len(rows):
            raise ParseError(f"frame index {idx}, expected {len(rows)}", lineno)
        values = _floats(fields[1:], lineno)
        if any(v < 0 or v > 1 for v in values):
            raise ParseError("posterior outside [0, 1]", lineno)
        rows.append(values)
    return FrameTrack(head[1], shift, np.array(rows, dtype=float).reshape(len(rows), dim))


def write_frame_track(t: FrameTrack) -> str:
    out = [f"TRK1 {t.recording_id} {t.frame_shift!r} {t.dim}"]
    for i, row in enumerate(t.frames):
        out.append(" ".join([str(i), *(f"{x:.6g}" for x in row)]))
    return "\n".join(out) + "\n"


def read_plda(text: str) -> PLDAModel:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("missing PLDA1 header", 1)
    lineno, head = lines[0]
    if head[0] != "PLDA1" or len(head) != 3:
        raise ParseError("expected 'PLDA1 <D> <R>'", lineno)
    try:
        dim, rank = int(head[1]), int(head[2])
    except ValueError:
        raise ParseError("D and R must be integers", lineno) from None
    if len(lines) != rank + 3:
        raise ParseError(f"expected {rank + 2} data lines, got {len(lines) - 1}", lineno)
    rows = []
    for i, (lineno, fields) in enumerate(lines[1:]):
        want = rank if i == rank + 1 else dim
        if len(fields) != want:
            raise ParseError(f"expected {want} values, got {len(fields)}", lineno)
        rows.append(_floats(fields, lineno))
    try:
        return PLDAModel(np.array(rows[0]), np.array(rows[1:-1]), np.array(rows[-1]))
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def write_plda(m: PLDAModel) -> str:
    def row(v):
        return " ".join(repr(float(x)) for x in v)

    out = [f"PLDA1 {m.dim} {m.rank}", row(m.mean)]
    out += [row(r) for r in m.transform]
    out.append(row(m.phi))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# maths


def preprocess(e: EmbeddingSequence, m: PLDAModel) -> EmbeddingSequence:
    """Length-normalize each vector to unit norm, then project into PLDA space."""
    if e.preprocessed:
        raise ValueError("embeddings are already preprocessed")
    if e.dim != m.dim:
        raise ValueError(f"embedding dim {e.dim} != PLDA dim {m.dim}")
    norms = np.linalg.norm(e.vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot length-normalize a zero vector")
    x = (e.vectors / norms - m.mean) @ m.transform.T
    return replace(e, vectors=x, preprocessed=True)


def _llr_coefficients(phi: np.ndarray):
    # per-dimension llr = const + quad * (a^2 + b^2) + cross * a * b
    const = np.log1p(phi) - 0.5 * np.log1p(2 * phi)
    quad = 0.5 / (phi + 1) - 0.5 * (phi + 1) / (2 * phi + 1)
    cross = phi / (2 * phi + 1)
    return const, quad, cross


def plda_llr(a, b, m: PLDAModel) -> float:
    """Same- vs different-speaker log-likelihood ratio of two PLDA-space vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (m.rank,) or b.shape != (m.rank,):
        raise ValueError(f"expected vectors of length {m.rank}")
    const, quad, cross = _llr_coefficients(m.phi)
    return float(np.sum(const + quad * (a * a + b * b) + cross * a * b))


def plda_llr_matrix(x: np.ndarray, m: PLDAModel) -> np.ndarray:
    """All-pairs :func:`plda_llr` for the rows of ``x``."""
    if x.shape[1] != m.rank:
        raise ValueError(f"expected vectors of length {m.rank}")
    const, quad, cross = _llr_coefficients(m.phi)
    sq = (x * x) @ quad
    return const.sum() + sq[:, None] + sq[None, :] + (x * cross) @ x.T


def estimate_plda(labeled) -> PLDAModel:
    """Fit a two-covariance PLDA from ``(speaker, vector)`` pairs.

    Returns a model whose transform whitens the within-class scatter and
    diagonalizes the between-class scatter; ``phi`` holds the resulting
    between-class variances, largest first, clamped at zero.
    """
    speakers = [s for s, _ in labeled]
    x = np.array([np.asarray(v, dtype=float) for _, v in labeled])
    labels, idx = np.unique(speakers, return_inverse=True)
    counts = np.bincount(idx)
    if len(labels) < 2:
        raise ValueError("need at least two speakers")
    if np.any(counts < 2):
        raise ValueError("need at least two vectors per speaker")
    n, dim = x.shape
    mean = x.mean(axis=0)
    spk_means = np.zeros((len(labels), dim))
    np.add.at(spk_means, idx, x)
    spk_means /= counts[:, None]

    within = x - spk_means[idx]
    sw = within.T @ within / (n - len(labels))
    centered = spk_means - mean
    # count-weighted scatter of the means, less the within-class noise it carries
    n_eff = n - np.sum(counts**2) / n
    sb = ((centered * counts[:, None]).T @ centered - (len(labels) - 1) * sw) / n_eff

    evals, evecs = np.linalg.eigh(sw)
    if np.any(evals <= 0):
        raise ValueError("within-class scatter is singular")
    whiten = (evecs / np.sqrt(evals)).T
    phi, basis = np.linalg.eigh(whiten @ sb @ whiten.T)
    order = np.argsort(phi)[::-1]
    phi = np.clip(phi[order], 0.0, None)
    transform = basis[:, order].T @ whiten
    return PLDAModel(mean, transform, phi)
