import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from mcdiar.clustering import (
    ahc,
    auto_spectral,
    cosine_affinity,
    nme_scan,
    relabel_contiguous,
    similarity_matrix,
)
from mcdiar.embeddings import EmbeddingSequence, PLDAModel, plda_llr
from mcdiar.synthetic import blobs


def seq(x):
    n = len(x)
    return EmbeddingSequence("R", 1, 1.0, 0.5, np.arange(n) * 0.5, np.arange(n) * 0.5 + 1.0, np.asarray(x, float))


def same_partition(a, b):
    return np.array_equal(relabel_contiguous(a), relabel_contiguous(b))


def test_cosine_examples():
    s = similarity_matrix(seq([[1.0, 0.0], [1.0, 0.0], [0.0, 2.0]]), "cosine")
    assert s[0, 1] == pytest.approx(1.0)
    assert s[0, 2] == pytest.approx(0.0)


def test_plda_similarity_matches_pairs(rng):
    m = PLDAModel(np.zeros(3), np.eye(3), np.array([2.0, 1.0, 0.3]))
    x = rng.normal(size=(3, 3))
    s = similarity_matrix(seq(x), "plda", m)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert s[i, j] == pytest.approx(plda_llr(x[i], x[j], m), abs=1e-12)
    with pytest.raises(ValueError):
        similarity_matrix(seq(x), "plda")


def test_ahc_threshold_extremes(rng):
    x = rng.normal(size=(7, 4))
    s = cosine_affinity(x)
    off = s[~np.eye(7, dtype=bool)]
    assert len(set(ahc(s, off.max() + 1e-6))) == 7
    assert set(ahc(s, -np.inf)) == {0}


def test_ahc_two_tight_pairs():
    x = np.array([[1.0, 0.05], [1.0, -0.05], [-1.0, 0.05], [-1.0, -0.05]])
    labels = ahc(cosine_affinity(x), 0.0)
    assert same_partition(labels, [0, 0, 1, 1])


def test_ahc_matches_average_linkage_dendrogram(rng):
    for _ in range(30):
        n = int(rng.integers(3, 25))
        s = rng.uniform(-1, 1, size=(n, n))
        s = (s + s.T) / 2
        np.fill_diagonal(s, 1.0)
        thr = float(rng.uniform(-0.3, 0.3))
        d = 2.0 - s
        np.fill_diagonal(d, 0.0)
        oracle = fcluster(linkage(squareform(d), "average"), t=2.0 - thr, criterion="distance")
        assert same_partition(ahc(s, thr), oracle)


def test_ahc_rejects_asymmetric():
    with pytest.raises(ValueError):
        ahc(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.0)


def test_ahc_single_item():
    assert ahc(np.zeros((1, 1)), 0.0).tolist() == [0]


def test_spectral_identical_vectors():
    x = np.tile([0.3, -0.2, 0.9], (12, 1))
    assert auto_spectral(x).tolist() == [0] * 12


@pytest.mark.parametrize("k", [2, 3])
def test_spectral_recovers_blobs(k):
    x, truth = blobs(np.random.default_rng(k), k)
    labels = auto_spectral(seq(x), seed=0)
    assert same_partition(labels, truth)


def test_spectral_scan_reports_ratios():
    x, _ = blobs(np.random.default_rng(5), 3)
    scan = nme_scan(cosine_affinity(x))
    assert [p for p, _, _ in scan] == list(range(1, len(scan) + 1))
    best = min(scan, key=lambda r: (r[1], r[0]))
    assert best[2] == 3


def test_spectral_seed_determinism():
    x, _ = blobs(np.random.default_rng(9), 4)
    assert np.array_equal(auto_spectral(x, seed=3), auto_spectral(x, seed=3))


def test_spectral_needs_two_points():
    with pytest.raises(ValueError):
        auto_spectral(np.ones((1, 3)))


def test_relabel_contiguous():
    assert relabel_contiguous([5, 5, 2, 9, 2]).tolist() == [0, 0, 1, 2, 1]
