import numpy as np
import pytest

from mcdiar.embeddings import (
    EmbeddingSequence,
    FrameTrack,
    PLDAModel,
    estimate_plda,
    plda_llr,
    plda_llr_matrix,
    preprocess,
    read_embeddings,
    read_frame_track,
    read_plda,
    write_embeddings,
    write_frame_track,
    write_plda,
)
from mcdiar.timeline import ParseError


def identity_model(d, phi=None):
    return PLDAModel(np.zeros(d), np.eye(d), np.ones(d) if phi is None else np.asarray(phi, float))


def test_read_one_window():
    e = read_embeddings("EMB1 R1 1 2 1.44 0.72\n0.0 1.44 0.5 -0.5\n")
    assert (e.recording_id, e.channel, e.dim, len(e)) == ("R1", 1, 2, 1)
    assert e.vectors.tolist() == [[0.5, -0.5]]
    assert e.centers.tolist() == [0.72]


def test_header_only_is_empty():
    e = read_embeddings("EMB1 R1 3 4 1.44 0.24\n")
    assert len(e) == 0 and e.dim == 4


def test_extra_value_fails_at_line():
    with pytest.raises(ParseError) as err:
        read_embeddings("EMB1 R1 1 2 1.44 0.72\n0.0 1.44 0.5 -0.5\n0.72 2.16 1 2 3\n")
    assert err.value.lineno == 3


@pytest.mark.parametrize(
    "text",
    [
        "EMB1 R1 9 2 1.44 0.72\n",  # channel out of range
        "EMB1 R1 1 2 1.44 0.72\n1.0 2.0 0 0\n0.5 1.5 0 0\n",  # unsorted starts
        "EMB1 R1 1 2 1.44 0.72\n0.0 2.0 0 0\n",  # longer than win_len
        "EMB1 R1 1 2 1.44 0.72\n0.0 1.0 nan 0\n",
    ],
)
def test_invalid_sequences(text):
    with pytest.raises(ParseError):
        read_embeddings(text)


def test_embedding_roundtrip(rng):
    v = rng.normal(size=(5, 3))
    e = EmbeddingSequence("R", 2, 1.44, 0.72, np.arange(5) * 0.72, np.arange(5) * 0.72 + 1.44, v)
    back = read_embeddings(write_embeddings(e))
    assert np.array_equal(back.vectors, v)
    assert np.allclose(back.starts, e.starts)


def test_doa_track():
    rows = "\n".join(f"{i} " + " ".join(["0.02"] * 36) for i in range(3))
    t = read_frame_track("TRK1 R1 0.128 36\n" + rows + "\n")
    assert (len(t), t.dim, t.frame_shift) == (3, 36, 0.128)


def test_scalar_track_and_roundtrip():
    t = read_frame_track("TRK1 R1 0.008 1\n0 0.1\n1 0.9\n2 0.5\n")
    assert t.dim == 1 and t.frames[:, 0].tolist() == [0.1, 0.9, 0.5]
    assert np.allclose(read_frame_track(write_frame_track(t)).frames, t.frames)


def test_track_rejects_out_of_range_and_gaps():
    with pytest.raises(ParseError):
        read_frame_track("TRK1 R1 0.008 1\n0 1.2\n")
    with pytest.raises(ParseError):
        read_frame_track("TRK1 R1 0.008 1\n0 0.1\n2 0.2\n")


def test_plda_roundtrip(rng):
    m = PLDAModel(rng.normal(size=4), rng.normal(size=(3, 4)), np.array([3.0, 1.0, 0.5]))
    back = read_plda(write_plda(m))
    assert np.array_equal(back.transform, m.transform)
    assert np.array_equal(back.phi, m.phi)
    with pytest.raises(ParseError):
        read_plda("PLDA1 4 3\n0 0 0 0\n")


def test_preprocess_identity():
    x = np.array([[1.0, 0.0], [0.6, 0.8]])
    e = EmbeddingSequence("R", 1, 1.0, 1.0, np.array([0.0, 1.0]), np.array([1.0, 2.0]), x)
    out = preprocess(e, identity_model(2))
    assert np.allclose(out.vectors, x) and out.preprocessed
    with pytest.raises(ValueError):
        preprocess(out, identity_model(2))


def test_preprocess_scale_invariant_and_matches_composition(rng):
    m = PLDAModel(rng.normal(size=5) * 0.1, rng.normal(size=(3, 5)), np.ones(3))
    v = rng.normal(size=(1, 5))
    seq = lambda x: EmbeddingSequence("R", 1, 1.0, 1.0, np.array([0.0]), np.array([1.0]), x)
    a = preprocess(seq(v), m).vectors
    b = preprocess(seq(2 * v), m).vectors
    assert np.allclose(a, b)
    unit = v[0] / np.sqrt(np.sum(v[0] ** 2))
    expected = [sum(m.transform[r, c] * (unit[c] - m.mean[c]) for c in range(5)) for r in range(3)]
    assert np.allclose(a[0], expected)


def test_preprocess_rejects_zero_vector():
    e = EmbeddingSequence("R", 1, 1.0, 1.0, np.array([0.0]), np.array([1.0]), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        preprocess(e, identity_model(2))


def test_llr_zero_phi(rng):
    m = identity_model(3, [0.0, 0.0, 0.0])
    for _ in range(10):
        assert plda_llr(rng.normal(size=3), rng.normal(size=3), m) == pytest.approx(0.0, abs=1e-12)


def _gauss_logpdf(x, cov):
    k = len(x)
    sign, logdet = np.linalg.slogdet(cov)
    return -0.5 * (k * np.log(2 * np.pi) + logdet + x @ np.linalg.solve(cov, x))


def test_llr_closed_form_one_dim():
    assert plda_llr([0.0], [0.0], identity_model(1)) == pytest.approx(0.5 * np.log(4 / 3), abs=1e-12)


def test_llr_matches_joint_gaussian(rng):
    phi = np.array([3.0, 0.7, 0.1])
    m = identity_model(3, phi)
    for _ in range(10):
        a, b = rng.normal(size=(2, 3)) * 2
        same = sum(
            _gauss_logpdf(np.array([a[i], b[i]]), np.array([[phi[i] + 1, phi[i]], [phi[i], phi[i] + 1]]))
            for i in range(3)
        )
        diff = sum(_gauss_logpdf(np.array([a[i], b[i]]), np.eye(2) * (phi[i] + 1)) for i in range(3))
        assert plda_llr(a, b, m) == pytest.approx(same - diff, abs=1e-10)
        assert plda_llr(a, b, m) == pytest.approx(plda_llr(b, a, m), abs=1e-12)


def test_llr_increases_with_inner_product():
    m = identity_model(1, [2.0])
    vals = [plda_llr([1.0], [c], m) for c in (-1.0, 1.0)]
    assert vals[1] > vals[0]


def test_llr_matrix_matches_pairs(rng):
    m = identity_model(4, [2.0, 1.0, 0.5, 0.0])
    x = rng.normal(size=(6, 4))
    mat = plda_llr_matrix(x, m)
    for i in range(6):
        for j in range(6):
            assert mat[i, j] == pytest.approx(plda_llr(x[i], x[j], m), abs=1e-12)


def _draw(rng, n_spk, phi=(4.0, 1.0), per=20):
    data, centers = [], []
    for s in range(n_spk):
        c = rng.normal(size=2) * np.sqrt(phi)
        centers.append(c)
        for v in c + rng.normal(size=(per, 2)):
            data.append((f"s{s}", v))
    return data, np.array(centers)


def test_estimate_recovers_realized_between_class_variance():
    # with 50 speakers the drawn centres themselves deviate ~20% from the
    # nominal variances, so compare against what was actually drawn
    hits = 0
    for seed in range(40):
        data, centers = _draw(np.random.default_rng(seed), 50)
        realized = np.sort(np.linalg.eigvalsh(np.cov(centers.T)))[::-1]
        phi = estimate_plda(data).phi
        hits += bool(np.all(np.abs(phi / realized - 1) < 0.15))
    assert hits >= 34


def test_estimate_recovers_nominal_phi_with_many_speakers():
    data, _ = _draw(np.random.default_rng(0), 2000)
    phi = estimate_plda(data).phi
    assert np.all(np.abs(phi / np.array([4.0, 1.0]) - 1) < 0.15)


def test_estimate_equal_means_gives_zero_phi():
    base = np.array([[1.0, 0.0], [-1.0, 0.5], [0.0, -0.5]])
    data = [(s, v) for s in ("a", "b", "c") for v in base]
    assert np.allclose(estimate_plda(data).phi, 0.0)


def test_estimate_whitens_within_class(rng):
    data, _ = _draw(rng, 30)
    m = estimate_plda(data)
    x = np.array([v for _, v in data])
    spk = np.array([s for s, _ in data])
    y = (x - m.mean) @ m.transform.T
    within = np.vstack([y[spk == s] - y[spk == s].mean(axis=0) for s in np.unique(spk)])
    cov = within.T @ within / (len(y) - 30)
    assert np.allclose(cov, np.eye(2), atol=1e-8)


def test_estimate_preconditions():
    with pytest.raises(ValueError):
        estimate_plda([("a", [0.0, 1.0]), ("a", [1.0, 0.0])])
    with pytest.raises(ValueError):
        estimate_plda([("a", [0.0, 1.0]), ("a", [1.0, 0.0]), ("b", [1.0, 1.0])])


def test_frame_track_validation():
    with pytest.raises(ValueError):
        FrameTrack("R", 0.01, np.array([[1.5]]))
