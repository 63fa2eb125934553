import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mrq.errors import EmptyInputError, ParameterError
from mrq.quantizer import (
    Codebook,
    KmeansConfig,
    assign,
    assign_all,
    kmeans_fit,
    quantization_error,
    sample_subsets,
)

from conftest import brute_force_qe

FOUR = np.array([(0, 0), (0, 1), (10, 0), (10, 1)], dtype=float)


def test_k1_is_the_mean():
    pts = np.random.default_rng(0).normal(size=(40, 3))
    cb = kmeans_fit(pts, KmeansConfig(k=1))
    np.testing.assert_allclose(cb.centroids[0], pts.mean(axis=0), atol=1e-12)


def test_two_clusters_match_exhaustive_search():
    cb = kmeans_fit(FOUR, KmeansConfig(k=2, seed=3))
    got = sorted(map(tuple, np.round(cb.centroids, 12)))
    assert got == [(0.0, 0.5), (10.0, 0.5)]
    assert cb.train_qe * 4 == pytest.approx(brute_force_qe(FOUR, 2), abs=1e-12)
    assert quantization_error(cb, FOUR) == pytest.approx(0.25, abs=1e-12)


def test_k_clamped_to_distinct_points():
    cb = kmeans_fit(FOUR, KmeansConfig(k=1000))
    assert cb.k == 4
    assert cb.train_qe == 0.0
    assert quantization_error(cb, FOUR) == 0.0


def test_k_clamped_with_duplicates():
    pts = np.array([[1.0], [1.0], [2.0], [2.0], [3.0]])
    cb = kmeans_fit(pts, KmeansConfig(k=10))
    assert cb.k == 3 and cb.train_qe == 0.0


def test_empty_input():
    with pytest.raises(EmptyInputError):
        kmeans_fit(np.zeros((0, 2)), KmeansConfig(k=2))


def test_config_validation():
    for bad in (dict(k=0), dict(k=2, max_iters=0), dict(k=2, restarts=0)):
        with pytest.raises(ParameterError):
            KmeansConfig(**bad)


def _fixed_codebook():
    return Codebook((0, 1), np.array([[0.0, 0.5], [10.0, 0.5]]))


def test_assign_examples():
    cb = _fixed_codebook()
    assert assign(cb, (9, 0)) == 1
    assert assign(cb, (0, 0.5)) == 0
    assert assign(cb, (10, 0.5)) == 1
    assert assign(cb, (5, 0.5)) == 0  # equidistant, lowest index wins


def test_assign_dimension_check():
    with pytest.raises(ParameterError):
        assign(_fixed_codebook(), (1, 2, 3))


def test_quantization_error_on_centroids_is_zero():
    cb = _fixed_codebook()
    assert quantization_error(cb, cb.centroids) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_lloyd_history_non_increasing(seed):
    rng = np.random.default_rng(seed)
    pts = np.concatenate([rng.normal(c, 0.7, size=(60, 2)) for c in ((0, 0), (4, 0), (0, 4), (4, 4))])
    cb = kmeans_fit(pts, KmeansConfig(k=6, restarts=1, seed=seed, tol=0.0))
    hist = np.array(cb.qe_history)
    assert len(hist) >= 2
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])


@pytest.mark.parametrize("seed", range(5))
def test_final_assignment_is_nearest(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(150, 3))
    cb = kmeans_fit(pts, KmeansConfig(k=7, seed=seed))
    labels = assign_all(cb, pts)
    d2 = ((pts[:, None, :] - cb.centroids[None]) ** 2).sum(-1)
    own = d2[np.arange(len(pts)), labels]
    assert np.all(own <= d2.min(axis=1) + 1e-9)
    # centroids pairwise distinct
    assert np.unique(cb.centroids, axis=0).shape[0] == cb.k


def test_qe_decreases_with_k():
    rng = np.random.default_rng(11)
    means = rng.normal(scale=5, size=(6, 2))
    pts = np.concatenate([rng.normal(mu, 0.5, size=(40, 2)) for mu in means])
    qes = [kmeans_fit(pts, KmeansConfig(k=k, restarts=10, seed=1)).train_qe for k in (1, 2, 3, 4, 6, 8, 12)]
    assert all(b <= a + 1e-6 for a, b in zip(qes, qes[1:]))


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 3)), elements=st.floats(-50, 50)),
       st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_assign_invariant_to_point_order(pts, seed):
    cb = kmeans_fit(pts, KmeansConfig(k=3, restarts=2))
    perm = np.random.default_rng(seed).permutation(len(pts))
    np.testing.assert_array_equal(assign_all(cb, pts)[perm], assign_all(cb, pts[perm]))


def test_deterministic_for_fixed_seed():
    pts = np.random.default_rng(5).normal(size=(100, 2))
    a = kmeans_fit(pts, KmeansConfig(k=5, seed=9))
    b = kmeans_fit(pts, KmeansConfig(k=5, seed=9))
    np.testing.assert_array_equal(a.centroids, b.centroids)


# ------------------------------------------------------------------ subsets


def test_full_subset_forced():
    plan = sample_subsets(3, 3, 1, seed=0)
    assert plan.subsets == ((0, 1, 2),)


def test_expected_participation():
    m, size, s = 4, 2, 4
    counts = np.zeros(m)
    trials = 4000
    for seed in range(trials):
        counts += sample_subsets(m, size, s, seed=seed).participation
    np.testing.assert_allclose(counts / trials, s * size / m, atol=0.05)


def test_plan_determinism_and_uncovered():
    a = sample_subsets(2, 1, 2, seed=42)
    b = sample_subsets(2, 1, 2, seed=42)
    assert a == b
    for seed in range(20):
        plan = sample_subsets(5, 1, 1, seed=seed)
        assert len(plan.uncovered) == 4


def test_subset_members_distinct_and_ranged():
    plan = sample_subsets(10, (1, 4), 50, seed=1)
    sizes = {len(s) for s in plan.subsets}
    assert sizes <= {1, 2, 3, 4} and len(sizes) > 1
    for s in plan.subsets:
        assert len(set(s)) == len(s) and list(s) == sorted(s)


def test_subset_errors():
    with pytest.raises(ParameterError):
        sample_subsets(3, 4, 1)
    with pytest.raises(ParameterError):
        sample_subsets(3, 2, 0)
    with pytest.raises(ParameterError):
        sample_subsets(3, 0, 1)
