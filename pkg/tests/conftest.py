import itertools

import numpy as np
import pytest

from mcdiar.timeline import Diarization, SpeakerTurn

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_diarization(rng, max_speakers=5, duration=120.0, rec="R", grid=0.001, max_turns=12):
    """Random turns with times on a ``grid`` lattice; overlaps allowed."""
    n_spk = int(rng.integers(1, max_speakers + 1))
    ticks = int(round(duration / grid))
    turns = []
    for k in range(n_spk):
        for _ in range(int(rng.integers(1, max_turns + 1))):
            a, b = sorted(rng.integers(0, ticks + 1, size=2))
            if b > a:
                turns.append(SpeakerTurn.make(a * grid, b * grid, f"s{k}"))
    return Diarization(rec, tuple(turns))


def frame_activity(d: Diarization, n_frames: int, grid=0.001):
    spk = d.speakers
    act = np.zeros((n_frames, len(spk)), dtype=bool)
    for k, s in enumerate(spk):
        for a, b in d.speaker_intervals()[s]:
            act[int(round(a / grid)) : int(round(b / grid)), k] = True
    return spk, act


def brute_mapping_value(ref_act, hyp_act):
    """Best total overlap (in frames) over every injective hyp->ref assignment."""
    m = ref_act.astype(int).T @ hyp_act.astype(int)  # (R, H)
    r, h = m.shape
    best = 0
    size = max(r, h)
    for perm in itertools.permutations(range(size), h):
        best = max(best, sum(m[perm[j], j] for j in range(h) if perm[j] < r))
    return best, m


def brute_der(ref: Diarization, hyp: Diarization, collar=0.0, score_overlap=True, grid=0.001):
    """DER on a frame lattice with an exhaustive speaker mapping."""
    end = max(ref.end_time(), hyp.end_time())
    n = int(round(end / grid)) + 1
    rspk, ra = frame_activity(ref, n, grid)
    hspk, ha = frame_activity(hyp, n, grid)
    m = ra.astype(int).T @ ha.astype(int)
    best, best_perm = -1, None
    size = max(len(rspk), len(hspk))
    for perm in itertools.permutations(range(size), len(hspk)):
        v = sum(m[perm[j], j] for j in range(len(hspk)) if perm[j] < len(rspk))
        if v > best:
            best, best_perm = v, perm
    scored = np.ones(n, dtype=bool)
    half = int(round(collar / 2 / grid))
    if half:
        for t in ref.turns:
            for edge in (t.start, t.end):
                e = int(round(edge / grid))
                scored[max(0, e - half) : e + half] = False
    nref = ra.sum(axis=1)
    nhyp = ha.sum(axis=1)
    if not score_overlap:
        scored &= nref <= 1
    correct = np.zeros(n, dtype=int)
    for j, i in enumerate(best_perm or ()):
        if i < len(rspk) and m[i, j] > 0:
            correct += ra[:, i] & ha[:, j]
    sel = scored
    tot = nref[sel].sum() * grid
    miss = np.maximum(nref - nhyp, 0)[sel].sum() * grid
    fa = np.maximum(nhyp - nref, 0)[sel].sum() * grid
    conf = (np.minimum(nref, nhyp) - correct)[sel].sum() * grid
    return tot, miss, fa, conf


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
