"""Bayesian HMM clustering of PLDA-space embeddings (VBx), with optional DOA cues.

The model: a hidden speaker chain over the embedding windows, latent
speaker vectors ``y_s ~ N(0, I)`` and emissions
``x_t | s ~ N(sqrt(phi) * y_s, I)``. Mean-field inference alternates the
Gaussian update of ``q(y_s)`` with forward-backward for ``q(z)``; ``Fa``
scales the acoustic evidence and ``Fb`` the speaker prior.

DOA cues enter in two ways. The emission of window ``t`` for speaker ``s``
can be multiplied by ``N(d_t | d_s, sigma^2 I)`` where ``d_s`` is the
speaker's mean DOA posterior, and the transition matrix can be switched
per step between a "stay" and a "change" matrix depending on whether the
most likely azimuth sector moved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .clustering import relabel_contiguous
from .embeddings import EmbeddingSequence, FrameTrack, PLDAModel

DOA_MODES = ("off", "emission", "transition", "both")


@dataclass(frozen=True)
class VbxParams:
    fa: float = 0.3
    fb: float = 17.0
    p_loop: float = 0.99
    max_iters: int = 40
    elbo_tol: float = 1e-4
    min_speaker_mass: float | None = None  # None -> 1e-3 * T
    doa_sigma: float = 0.01
    doa_mode: str = "off"

    def __post_init__(self):
        if not (self.fa > 0 and self.fb > 0):
            raise ValueError("fa and fb must be positive")
        if not 0 < self.p_loop < 1:
            raise ValueError("p_loop must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.doa_sigma <= 0:
            raise ValueError("doa_sigma must be positive")
        if self.doa_mode not in DOA_MODES:
            raise ValueError(f"doa_mode must be one of {DOA_MODES}")

    @property
    def uses_doa(self) -> bool:
        return self.doa_mode != "off"


class VbxResult(NamedTuple):
    q: np.ndarray  # (T, S) per-window speaker posteriors
    labels: np.ndarray  # (T,) contiguous argmax labels
    elbo: list[float]


@dataclass(frozen=True, eq=False)
class DoaProfile:
    vectors: np.ndarray  # (S, dim)
    empty: np.ndarray  # (S,) True where the speaker had no posterior mass


# ---------------------------------------------------------------------------
# HMM pieces


def _lse_cols(v: np.ndarray) -> np.ndarray:
    # log-sum-exp over axis 0, tolerating all -inf columns
    m = v.max(axis=0)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.exp(v - m).sum(axis=0))


def forward_backward(log_lik: np.ndarray, log_trans: np.ndarray, log_init: np.ndarray):
    """Log-space forward-backward.

    ``log_trans`` is either one (S, S) matrix or a (T-1, S, S) stack where
    entry ``[t, i, j]`` is the log probability of moving from state ``i``
    at step ``t`` to state ``j`` at ``t + 1``.

    Returns ``(gamma, total_log_lik, log_fwd, log_bwd)``.
    """
    n, s = log_lik.shape
    log_trans = np.asarray(log_trans, dtype=float)
    stacked = log_trans.ndim == 3
    lf = np.empty((n, s))
    lb = np.empty((n, s))
    lf[0] = log_init + log_lik[0]
    for t in range(1, n):
        a = log_trans[t - 1] if stacked else log_trans
        lf[t] = log_lik[t] + _lse_cols(lf[t - 1][:, None] + a)
    lb[-1] = 0.0
    for t in range(n - 2, -1, -1):
        a = log_trans[t] if stacked else log_trans
        lb[t] = _lse_cols((a + (log_lik[t + 1] + lb[t + 1])[None, :]).T)
    total = float(_lse_cols(lf[-1][:, None])[0])
    gamma = np.exp(lf + lb - total)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma, total, lf, lb


def doa_transition_row(changed: bool, n_speakers: int) -> np.ndarray:
    """Transition matrix for one step given whether the DOA sector changed.

    Self-transition gets 0.01 after a change and 0.99 otherwise, every other
    target the complement; each row is then renormalized.
    """
    if n_speakers < 1:
        raise ValueError("need at least one speaker")
    stay, move = (0.01, 0.99) if changed else (0.99, 0.01)
    m = np.full((n_speakers, n_speakers), move)
    np.fill_diagonal(m, stay)
    return m / m.sum(axis=1, keepdims=True)


def align_doa(doa: FrameTrack, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Average the DOA frames whose centres fall inside each window.

    Windows that cover no frame centre take the frame nearest to the
    window centre.
    """
    if len(starts) and len(doa) * doa.frame_shift < np.max(ends) - doa.frame_shift:
        raise ValueError("DOA track is shorter than the embedding span")
    centers = (np.arange(len(doa)) + 0.5) * doa.frame_shift
    lo = np.searchsorted(centers, starts, side="left")
    hi = np.searchsorted(centers, ends, side="left")
    csum = np.vstack([np.zeros((1, doa.dim)), np.cumsum(doa.frames, axis=0)])
    out = np.empty((len(starts), doa.dim))
    for t, (a, b) in enumerate(zip(lo, hi)):
        if b > a:
            out[t] = (csum[b] - csum[a]) / (b - a)
        else:
            mid = (starts[t] + ends[t]) / 2.0
            k = int(np.clip(np.floor(mid / doa.frame_shift), 0, len(doa) - 1))
            out[t] = doa.frames[k]
    return out


def doa_speaker_profile(q: np.ndarray, aligned_doa: np.ndarray) -> DoaProfile:
    """Posterior-weighted mean DOA vector per speaker."""
    mass = q.sum(axis=0)
    empty = mass <= 0
    dim = aligned_doa.shape[1]
    vectors = np.full((q.shape[1], dim), 1.0 / dim)
    ok = ~empty
    vectors[ok] = (q[:, ok].T @ aligned_doa) / mass[ok, None]
    return DoaProfile(vectors, empty)


def doa_changes(aligned_doa: np.ndarray) -> np.ndarray:
    """Flags for steps t >= 1 whose argmax sector differs from step t - 1."""
    a = np.argmax(aligned_doa, axis=1)
    return a[1:] != a[:-1]


# ---------------------------------------------------------------------------
# variational updates


def speaker_posteriors(x: np.ndarray, q: np.ndarray, phi: np.ndarray, fa: float, fb: float):
    """Update of the Gaussian q(y_s).

    Returns ``(inv_l, alpha)``, both (S, R): the diagonal of the posterior
    covariance and the posterior mean of each speaker vector.
    """
    counts = q.sum(axis=0)
    stats = q.T @ x
    ratio = fa / fb
    inv_l = 1.0 / (1.0 + ratio * counts[:, None] * phi[None, :])
    alpha = ratio * inv_l * np.sqrt(phi)[None, :] * stats
    return inv_l, alpha


def expected_log_lik(x: np.ndarray, inv_l: np.ndarray, alpha: np.ndarray, phi: np.ndarray, fa: float):
    """``Fa * E_q(y)[log N(x_t; sqrt(phi) y_s, I)]`` for every (t, s)."""
    r = x.shape[1]
    g = -0.5 * (np.sum(x * x, axis=1) + r * np.log(2 * np.pi))
    cross = x @ (np.sqrt(phi)[None, :] * alpha).T
    quad = 0.5 * np.sum(phi[None, :] * (inv_l + alpha**2), axis=1)
    return fa * (g[:, None] + cross - quad[None, :])


def speaker_kl_term(inv_l: np.ndarray, alpha: np.ndarray, fb: float) -> float:
    """``-Fb * sum_s KL(q(y_s) || N(0, I))``."""
    return float(fb * 0.5 * np.sum(np.log(inv_l) - inv_l - alpha**2 + 1.0))


def _stationary_log_trans(pi: np.ndarray, p_loop: float) -> np.ndarray:
    a = (1.0 - p_loop) * np.tile(pi, (len(pi), 1)) + p_loop * np.eye(len(pi))
    with np.errstate(divide="ignore"):
        return np.log(a)


def _jump_update(gamma, lls, lf, lb, total, pi, p_loop):
    # expected number of chain entries into each state: the initial step
    # plus every transition taken through the (1 - p_loop) * pi branch
    with np.errstate(divide="ignore"):
        jump = np.exp(
            logsumexp(lf[:-1], axis=1)[:, None]
            + lb[1:]
            + lls[1:]
            + np.log((1.0 - p_loop) * pi)[None, :]
            - total
        ).sum(axis=0)
    new = gamma[0] + jump
    return new / new.sum()


def vb_hmm(
    e: EmbeddingSequence | np.ndarray,
    init_labels,
    model: PLDAModel | np.ndarray,
    params: VbxParams = VbxParams(),
    doa: FrameTrack | np.ndarray | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> VbxResult:
    """Run VBx resegmentation from hard initial labels.

    ``e`` must already be in PLDA space (see ``embeddings.preprocess``);
    ``model`` supplies the between-class variances (a PLDAModel or the phi
    vector itself). ``doa`` is a DOA posterior track, or an already aligned
    (T, dim) array, and is required unless ``params.doa_mode`` is "off".
    ``callback(iteration, q, elbo)`` is invoked after every update of q.
    """
    if isinstance(e, EmbeddingSequence):
        if not e.preprocessed:
            raise ValueError("vb_hmm expects preprocessed embeddings")
        x = e.vectors
    else:
        x = np.asarray(e, dtype=float)
    phi = model.phi if isinstance(model, PLDAModel) else np.asarray(model, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("empty embedding sequence")
    if x.shape[1] != len(phi):
        raise ValueError("embedding dim does not match PLDA rank")
    labels0 = relabel_contiguous(np.asarray(init_labels))
    if len(labels0) != n:
        raise ValueError("init labels and embeddings differ in length")

    aligned = None
    if params.uses_doa:
        if doa is None:
            raise ValueError(f"doa_mode={params.doa_mode!r} needs a DOA track")
        if isinstance(doa, FrameTrack):
            if not isinstance(e, EmbeddingSequence):
                raise ValueError("aligning a DOA track needs window times")
            aligned = align_doa(doa, e.starts, e.ends)
        else:
            aligned = np.asarray(doa, dtype=float)
            if aligned.shape[0] != n:
                raise ValueError("aligned DOA rows must match the windows")
    use_doa_emission = params.doa_mode in ("emission", "both")
    use_doa_trans = params.doa_mode in ("transition", "both")
    changes = doa_changes(aligned) if use_doa_trans else None

    min_mass = 1e-3 * n if params.min_speaker_mass is None else params.min_speaker_mass
    q = np.zeros((n, labels0.max() + 1))
    q[np.arange(n), labels0] = 1.0
    pi = q.sum(axis=0) / n
    elbo: list[float] = []

    for it in range(params.max_iters):
        n_spk = q.shape[1]
        inv_l, alpha = speaker_posteriors(x, q, phi, params.fa, params.fb)
        lls = expected_log_lik(x, inv_l, alpha, phi, params.fa)
        if use_doa_emission:
            prof = doa_speaker_profile(q, aligned)
            dist = np.sum((aligned[:, None, :] - prof.vectors[None, :, :]) ** 2, axis=2)
            lls = lls - dist / (2.0 * params.doa_sigma**2)
        if use_doa_trans:
            stay = np.log(doa_transition_row(False, n_spk))
            move = np.log(doa_transition_row(True, n_spk))
            log_trans = np.where(changes[:, None, None], move[None], stay[None])
        else:
            log_trans = _stationary_log_trans(pi, params.p_loop)
        with np.errstate(divide="ignore"):
            log_pi = np.log(pi)
        q, total, lf, lb = forward_backward(lls, log_trans, log_pi)
        value = total + speaker_kl_term(inv_l, alpha, params.fb)
        elbo.append(value)

        if use_doa_trans:
            pi = q.sum(axis=0) / n
        else:
            pi = _jump_update(q, lls, lf, lb, total, pi, params.p_loop)

        # drop speakers left with (almost) no posterior mass; they never return
        keep = q.sum(axis=0) >= min_mass
        if not np.any(keep):
            keep[np.argmax(q.sum(axis=0))] = True
        if not np.all(keep):
            q = q[:, keep]
            q /= q.sum(axis=1, keepdims=True)
            pi = pi[keep] / pi[keep].sum()
        if callback is not None:
            callback(it, q, value)

        if it > 0 and elbo[-1] - elbo[-2] < params.elbo_tol:
            break

    labels = relabel_contiguous(np.argmax(q, axis=1))
    return VbxResult(q, labels, elbo)
