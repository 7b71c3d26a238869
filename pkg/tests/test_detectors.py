import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from dualtier import detectors as det
from dualtier.dataset import FeatureMatrix


def test_average_path_length():
    c = det.average_path_length([0, 1, 2, 256, 1000])
    assert c[0] == 0 and c[1] == 0 and c[2] == 1
    # frozen: 2 * (ln 255 + gamma) - 2 * 255 / 256 at 30 digits (mpmath)
    assert c[3] == pytest.approx(10.244770920119918, abs=1e-12)
    # ln(n-1) + gamma approximates the harmonic number H(n-1)
    h = sum(1.0 / i for i in range(1, 1000))
    assert abs(c[4] - (2 * h - 2 * 999 / 1000)) < 2e-3


def test_threshold_rule():
    s = np.array([1.0, 2.0, 3.0, 4.0])
    th = det.fit_threshold(s)
    assert th.mean == 2.5
    assert th.std_dev == pytest.approx(np.sqrt(1.25))
    assert th.th == pytest.approx(2.5 - 3 * np.sqrt(1.25))
    with pytest.raises(ValueError):
        det.fit_threshold([])


def test_threshold_mass_monte_carlo():
    rng = np.random.default_rng(0)
    masses = []
    for _ in range(20):
        s = rng.standard_normal(10_000)
        masses.append(np.mean(s < det.fit_threshold(s).th))
    assert 0.0009 < np.mean(masses) < 0.0019


@pytest.mark.parametrize("kind", [det.ISOLATION_FOREST, det.LOF])
def test_orientation(kind, rng):
    X = rng.standard_normal((300, 3))
    model = det.fit_detector(X, det.DetectorSpec(kind=kind, n_trees=50, k_neighbors=10))
    center, far = det.score(model, np.zeros(3)), det.score(model, np.full(3, 8.0))
    assert center > far
    assert det.classify(model, np.full(3, 8.0)) == det.OUTLIER
    assert det.classify(model, np.zeros(3)) == det.INLIER


def test_tie_at_threshold_is_inlier(rng):
    X = rng.standard_normal((50, 2))
    m = det.fit_detector(X, det.DetectorSpec(kind=det.LOF, k_neighbors=5))
    m.threshold = det.ScoreThreshold(0.0, 0.0, det.score(m, X[0]))
    assert det.classify(m, X[0]) == det.INLIER


def test_iforest_scores_and_determinism(rng):
    X = rng.standard_normal((400, 4))
    spec = det.DetectorSpec(n_trees=30, seed=5)
    a, b = det.fit_iforest(X, spec), det.fit_iforest(X, spec)
    Q = rng.standard_normal((20, 4)) * 3
    assert np.array_equal(a.score_samples(Q), b.score_samples(Q))
    s = a.score_samples(Q)
    assert ((s < 0) & (s >= -1)).all()
    assert not np.array_equal(s, det.fit_iforest(X, det.DetectorSpec(n_trees=30, seed=6)).score_samples(Q))


def test_iforest_small_and_constant():
    X = np.ones((10, 3))
    m = det.fit_iforest(X, det.DetectorSpec(n_trees=5))
    assert np.isfinite(m.score_samples(X)).all()
    m2 = det.fit_iforest(np.array([[0.0], [1.0]]), det.DetectorSpec(n_trees=5))
    assert np.isfinite(m2.training_scores).all()


def test_lof_matches_oracle(rng):
    X = rng.standard_normal((60, 3))
    X[5] = X[6]  # duplicate point
    k = 7
    m = det.fit_lof(X, det.DetectorSpec(kind=det.LOF, k_neighbors=k))
    ref_train, _, _ = oracles.lof_train(X, k)
    assert np.allclose(-m.training_scores, ref_train, atol=1e-9, rtol=0)
    Q = rng.standard_normal((15, 3)) * 2
    assert np.allclose(-m.score_samples(Q), oracles.lof_query(X, k, Q), atol=1e-9, rtol=0)


def test_lof_needs_more_rows_than_k():
    with pytest.raises(ValueError):
        det.fit_lof(np.zeros((5, 2)), det.DetectorSpec(kind=det.LOF, k_neighbors=5))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(12, 40), st.integers(1, 4))
def test_lof_oracle_property(seed, n, d):
    X = np.random.default_rng(seed).integers(-3, 4, size=(n, d)).astype(float)
    k = 5
    m = det.fit_lof(X, det.DetectorSpec(kind=det.LOF, k_neighbors=k))
    ref, _, _ = oracles.lof_train(X, k)
    assert np.allclose(-m.training_scores, ref, rtol=1e-9, atol=1e-9)


def test_feature_count_mismatch(rng):
    m = det.fit_iforest(rng.standard_normal((30, 3)), det.DetectorSpec(n_trees=3))
    with pytest.raises(ValueError):
        m.score_samples(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        det.score(m, np.zeros((2, 3)))


def test_spec_validation():
    with pytest.raises(ValueError):
        det.DetectorSpec(kind="ocsvm")
    with pytest.raises(ValueError):
        det.DetectorSpec(kind=det.EXTERNAL)
    with pytest.raises(ValueError):
        det.DetectorSpec(n_trees=0)


def test_external_plugin(rng):
    X = rng.standard_normal((100, 2))
    spec = det.DetectorSpec(kind=det.EXTERNAL, plugin="oracles:centroid_factory")
    m = det.fit_detector(FeatureMatrix(X, ["a", "b"]), spec)
    assert det.classify(m, np.array([10.0, 10.0])) == det.OUTLIER
    back = det.from_bytes(det.to_bytes(m))
    assert np.array_equal(back.score_samples(X), m.score_samples(X))


@pytest.mark.parametrize("kind", [det.ISOLATION_FOREST, det.LOF])
def test_serialization_roundtrip(kind, rng):
    X = rng.standard_normal((80, 3))
    m = det.fit_detector(X, det.DetectorSpec(kind=kind, n_trees=10, k_neighbors=5))
    blob = det.to_bytes(m)
    back = det.from_bytes(blob)
    Q = rng.standard_normal((10, 3))
    assert np.array_equal(back.score_samples(Q), m.score_samples(Q))
    assert back.threshold == m.threshold
    assert det.to_bytes(back) == blob
    from dualtier.envelope import EnvelopeError
    with pytest.raises(EnvelopeError):
        det.from_bytes(b"junk" + blob[4:])
