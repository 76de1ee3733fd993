import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crossings_fixture, make_corr, random_spd
from semreg.consistency import (
    G_TRIM, L_TRIM, ConsistencyGraph, TrimThresholds, build_graph, consistent, g_trim_consistent, g_trim_distance_sq,
    l_trim_consistent, pair_measures, sqrtm_psd, wasserstein_sq,
)
from semreg.geometry import random_rotation

seeds = st.integers(0, 2**31)


def test_wasserstein_examples():
    S = np.diag([1.0, 2.0, 3.0])
    assert wasserstein_sq(np.zeros(3), S, np.zeros(3), S) == pytest.approx(0, abs=1e-12)
    assert wasserstein_sq(np.zeros(3), S, [1, 0, 0], S) == pytest.approx(1.0, abs=1e-12)
    s2 = 0.7**2
    assert wasserstein_sq(np.zeros(3), s2 * np.eye(3), np.zeros(3), 4 * s2 * np.eye(3)) == pytest.approx(3 * s2, abs=1e-12)


def _bures_eig(A, B):
    """Independent oracle: eigenvalues of A B via a general (non-symmetric) solver."""
    lam = np.linalg.eigvals(A @ B).real
    return np.trace(A) + np.trace(B) - 2 * np.sqrt(np.clip(lam, 0, None)).sum()


@given(seeds)
def test_wasserstein_against_eig_oracle(seed):
    rng = np.random.default_rng(seed)
    A, B = random_spd(rng), random_spd(rng)
    ma, mb = rng.normal(size=3), rng.normal(size=3)
    expect = np.sum((ma - mb) ** 2) + _bures_eig(A, B)
    assert wasserstein_sq(ma, A, mb, B) == pytest.approx(expect, abs=1e-8)


@given(seeds)
def test_wasserstein_metric(seed):
    rng = np.random.default_rng(seed)
    g = [(rng.normal(size=3), random_spd(rng)) for _ in range(3)]
    d = lambda a, b: np.sqrt(wasserstein_sq(*a, *b))  # noqa: E731
    assert d(g[0], g[1]) == pytest.approx(d(g[1], g[0]), abs=1e-9)
    assert d(g[0], g[2]) <= d(g[0], g[1]) + d(g[1], g[2]) + 1e-8


def test_wasserstein_rejects_bad_input():
    with pytest.raises(ValueError, match="symmetric"):
        wasserstein_sq(np.zeros(3), np.triu(np.ones((3, 3))), np.zeros(3), np.eye(3))
    with pytest.raises(ValueError, match="semidefinite"):
        wasserstein_sq(np.zeros(3), -np.eye(3), np.zeros(3), np.eye(3))


@given(seeds)
def test_sqrtm(seed):
    S = random_spd(np.random.default_rng(seed))
    r = sqrtm_psd(S)
    np.testing.assert_allclose(r @ r, S, atol=1e-9)


def test_sqrtm_examples():
    np.testing.assert_allclose(sqrtm_psd(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(sqrtm_psd(np.diag([4.0, 9.0, 16.0])), np.diag([2.0, 3.0, 4.0]), atol=1e-14)


def test_l_trim_examples():
    a = make_corr([0, 0, 0], [0, 0, 0])
    b = make_corr([5, 0, 0], [0, 5, 0])
    c = make_corr([5, 0, 0], [0, 5.5, 0])
    assert l_trim_consistent(a, b, 0.2)
    assert not l_trim_consistent(a, c, 0.2)


def test_crossings_case():
    (t1, t2), (x1, x2) = crossings_fixture()
    bound = TrimThresholds().g_trim_bound
    assert l_trim_consistent(x1, x2, 0.2)
    assert not g_trim_consistent(x1, x2, bound)
    assert g_trim_distance_sq(x1, x2) - g_trim_distance_sq(t1, t2) > bound**2
    assert l_trim_consistent(t1, t2, 0.2) and g_trim_consistent(t1, t2, bound)


@given(seeds)
def test_crossings_case_any_pose(seed):
    rng = np.random.default_rng(seed)
    (t1, t2), (x1, x2) = crossings_fixture(random_rotation(rng), rng.normal(size=3) * 20)
    bound = TrimThresholds().g_trim_bound
    assert g_trim_consistent(t1, t2, bound) and not g_trim_consistent(x1, x2, bound)
    assert l_trim_consistent(x1, x2, 0.2)


@given(seeds)
def test_exact_inliers_consistent(seed):
    rng = np.random.default_rng(seed)
    R, t = random_rotation(rng), rng.normal(size=3) * 10
    a, b = rng.normal(size=(2, 3)) * 5
    Ca, Cb = random_spd(rng, 0.3), random_spd(rng, 0.3)
    ci = make_corr(a, R @ a + t, Ca, R @ Ca @ R.T)
    cj = make_corr(b, R @ b + t, Cb, R @ Cb @ R.T)
    assert g_trim_distance_sq(ci, cj) < 1e-9
    assert g_trim_consistent(ci, cj, 1e-4) and l_trim_consistent(ci, cj, 1e-6)


def test_shape_term_alone_rejects():
    # equal segment lengths, covariance mismatch
    ci = make_corr([0, 0, 0], [0, 0, 0], np.eye(3) * 0.01, np.eye(3) * 0.01)
    cj = make_corr([3, 0, 0], [3, 0, 0], np.eye(3) * 0.01, np.diag([0.01, 0.5, 0.01]))
    bound = TrimThresholds().g_trim_bound
    shape = wasserstein_sq(np.zeros(3), np.eye(3) * 0.02, np.zeros(3), np.diag([0.02, 0.51, 0.02]))
    assert shape > bound**2
    assert l_trim_consistent(ci, cj, 0.2) and not g_trim_consistent(ci, cj, bound)


def _inliers_and_outliers(rng, n_in=10, n_out=5):
    R, t = random_rotation(rng), rng.normal(size=3) * 10
    corrs = []
    for _ in range(n_in):
        a, C = rng.normal(size=3) * 8, random_spd(rng, 0.2)
        corrs.append(make_corr(a, R @ a + t, C, R @ C @ R.T))
    for _ in range(n_out):
        corrs.append(make_corr(rng.normal(size=3) * 8, rng.normal(size=3) * 8, random_spd(rng, 0.2), random_spd(rng, 0.2)))
    return corrs, R, t


@pytest.mark.parametrize("mode", [L_TRIM, G_TRIM])
def test_complete_graph_on_inliers(rng, mode):
    corrs, _, _ = _inliers_and_outliers(rng, 10, 0)
    g = build_graph(corrs, mode)
    assert g.edge_count == 45


@pytest.mark.parametrize("mode", [L_TRIM, G_TRIM])
def test_graph_matches_pairwise_predicate(mode):
    for seed in range(5):
        corrs, _, _ = _inliers_and_outliers(np.random.default_rng(seed))
        g = build_graph(corrs, mode, chunk=7)
        th = TrimThresholds()
        for i in range(len(corrs)):
            for j in range(len(corrs)):
                expect = i != j and consistent(corrs[i], corrs[j], mode, th)
                assert g.adjacency[i, j] == expect


@given(seeds)
@settings(max_examples=20)
def test_predicates_invariant_to_common_motion(seed):
    rng = np.random.default_rng(seed)
    corrs, _, _ = _inliers_and_outliers(rng, 6, 6)
    G, s = random_rotation(rng), rng.normal(size=3) * 30
    moved = [make_corr(G @ c.src_mean + s, c.dst_mean, G @ c.src_cov @ G.T, c.dst_cov) for c in corrs]
    i, j = np.triu_indices(len(corrs), 1)
    for mode in (L_TRIM, G_TRIM):
        a = pair_measures(corrs, i, j, mode)
        b = pair_measures(moved, i, j, mode)
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_batched_equals_scalar(rng):
    corrs, _, _ = _inliers_and_outliers(rng, 8, 8)
    i, j = np.triu_indices(len(corrs), 1)
    batch = pair_measures(corrs, i, j, G_TRIM)
    scalar = [g_trim_distance_sq(corrs[a], corrs[b]) for a, b in zip(i, j)]
    np.testing.assert_allclose(batch, scalar, atol=1e-10)


def test_g_trim_edges_subset_on_crossings(rng):
    # many copies of same-label anisotropic clusters: all-to-all pairing creates crossings
    R, t = random_rotation(rng), rng.normal(size=3)
    cents = rng.uniform(-15, 15, (8, 3))
    covs = [random_spd(rng, 0.3) for _ in cents]
    corrs = [make_corr(a, R @ b + t, Ca, R @ Cb @ R.T) for a, Ca in zip(cents, covs) for b, Cb in zip(cents, covs)]
    gl, gg = build_graph(corrs, L_TRIM), build_graph(corrs, G_TRIM)
    assert gg.edge_count < gl.edge_count
    assert not np.any(gg.adjacency & ~gl.adjacency)
    # truth edges persist
    truth = [k * 8 + k for k in range(8)]
    assert all(gg.adjacency[a, b] for a in truth for b in truth if a != b)


def test_graph_validation():
    with pytest.raises(ValueError):
        build_graph([make_corr([0, 0, 0], [0, 0, 0])])
    with pytest.raises(ValueError):
        ConsistencyGraph(2, np.array([[True, False], [False, False]]), G_TRIM)
    with pytest.raises(ValueError):
        ConsistencyGraph(2, np.array([[False, True], [False, False]]), G_TRIM)
