"""Initial clustering of embedding windows.

``ahc`` gives the average-linkage initialization consumed by the VB-HMM;
``auto_spectral`` is the self-tuning spectral alternative that picks both
the affinity sparsity and the number of speakers from the eigengap.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.cluster import KMeans

from .embeddings import EmbeddingSequence, PLDAModel, plda_llr_matrix

NME_EPS = 1e-10


def similarity_matrix(e: EmbeddingSequence, metric: str = "plda", model: PLDAModel | None = None):
    """Pairwise window similarities, shape (T, T)."""
    x = e.vectors
    if metric == "cosine":
        return cosine_affinity(x)
    if metric == "plda":
        if model is None:
            raise ValueError("metric 'plda' needs a PLDA model")
        return plda_llr_matrix(x, model)
    raise ValueError(f"unknown metric {metric!r}")


def cosine_affinity(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cosine similarity undefined for zero vectors")
    u = x / norms
    s = u @ u.T
    np.fill_diagonal(s, 1.0)
    return s


def relabel_contiguous(labels) -> np.ndarray:
    """Map arbitrary labels to 0..K-1 in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(int)


def ahc(similarity: np.ndarray, threshold: float) -> np.ndarray:
    """Average-linkage agglomerative clustering on a similarity matrix.

    The pair of clusters with the highest average similarity is merged
    while that similarity is at least ``threshold``. Ties go to the
    smallest ``(i, j)`` pair, where clusters are indexed by their smallest
    member.
    """
    s = np.array(similarity, dtype=float)
    n = s.shape[0]
    if n < 1:
        raise ValueError("empty similarity matrix")
    if s.shape != (n, n):
        raise ValueError("similarity matrix must be square")
    if not np.allclose(s, s.T, atol=1e-9, rtol=0):
        raise ValueError("similarity matrix must be symmetric")
    s = (s + s.T) / 2.0
    np.fill_diagonal(s, -np.inf)
    sizes = np.ones(n)
    owner = np.arange(n)
    active = np.ones(n, dtype=bool)
    # argmax returns the first maximum, i.e. the smallest partner index
    best = np.argmax(s, axis=1) if n > 1 else np.zeros(1, dtype=int)
    best_val = s[np.arange(n), best]

    for _ in range(n - 1):
        vals = np.where(active, best_val, -np.inf)
        a = int(np.argmax(vals))
        top = vals[a]
        if not top >= threshold:
            break
        b = int(best[a])
        if b < a:
            a, b = b, a
        merged = (sizes[a] * s[a] + sizes[b] * s[b]) / (sizes[a] + sizes[b])
        merged[a] = -np.inf
        merged[b] = -np.inf
        merged[~active] = -np.inf
        s[a, :] = merged
        s[:, a] = merged
        s[b, :] = -np.inf
        s[:, b] = -np.inf
        sizes[a] += sizes[b]
        active[b] = False
        owner[owner == b] = a
        best_val[b] = -np.inf

        stale = active & ((best == a) | (best == b))
        stale[a] = True
        for k in np.flatnonzero(stale):
            best[k] = int(np.argmax(s[k]))
            best_val[k] = s[k, best[k]]
        others = active & ~stale
        better = others & ((merged > best_val) | ((merged == best_val) & (a < best)))
        best[better] = a
        best_val[better] = merged[better]

    return relabel_contiguous(owner)


def _binarized_affinity(a: np.ndarray, p: int) -> np.ndarray:
    n = a.shape[0]
    masked = a.copy()
    np.fill_diagonal(masked, -np.inf)
    nbrs = np.argsort(-masked, axis=1, kind="stable")[:, :p]
    b = np.zeros_like(a)
    b[np.repeat(np.arange(n), p), nbrs.reshape(-1)] = 1.0
    return np.maximum(b, b.T)


def _laplacian(b: np.ndarray) -> np.ndarray:
    return np.diag(b.sum(axis=1)) - b


def nme_scan(affinity: np.ndarray, max_p: int | None = None):
    """Score every candidate neighbour count ``p``.

    Returns a list of ``(p, ratio, k)`` with ``ratio = p / (gap + eps)``,
    where ``gap`` is the largest eigengap among the first ceil(n/2) gaps of
    the unnormalized Laplacian and ``k`` the cluster count it implies.
    """
    n = affinity.shape[0]
    half = math.ceil(n / 2)
    top_p = half if max_p is None else max(1, min(half, max_p))
    out = []
    for p in range(1, min(top_p, n - 1) + 1):
        lam = np.linalg.eigvalsh(_laplacian(_binarized_affinity(affinity, p)))
        gaps = np.diff(lam)[:half]
        k = int(np.argmax(gaps)) + 1
        out.append((p, p / (gaps[k - 1] + NME_EPS), k))
    return out


def auto_spectral(
    e: EmbeddingSequence | np.ndarray,
    seed: int = 0,
    max_p: int | None = None,
    n_init: int = 10,
    max_iter: int = 100,
) -> np.ndarray:
    """Spectral clustering with the neighbour count and K picked by eigengap.

    Dense eigendecompositions throughout: each candidate ``p`` costs
    O(n^3), so ``max_p`` can cap the scan on long recordings.
    """
    x = e.vectors if isinstance(e, EmbeddingSequence) else np.asarray(e, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("auto_spectral needs at least two windows")
    aff = cosine_affinity(x)
    scan = nme_scan(aff, max_p)
    p_best, _, k = min(scan, key=lambda r: (r[1], r[0]))
    if k == 1:
        return np.zeros(n, dtype=int)
    lam, vec = np.linalg.eigh(_laplacian(_binarized_affinity(aff, p_best)))
    emb = vec[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.where(norms > 0, norms, 1.0)
    km = KMeans(n_clusters=k, n_init=n_init, max_iter=max_iter, random_state=seed)
    return relabel_contiguous(km.fit_predict(emb))
