import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semreg.clique import brute_force_max_clique, core_numbers, greedy_clique, is_clique, max_clique
from semreg.consistency import ConsistencyGraph


def random_graph(rng, n, p):
    U = np.triu(rng.random((n, n)) < p, 1)
    return ConsistencyGraph(n, U | U.T, "g_trim")


def complete(n):
    return ConsistencyGraph(n, ~np.eye(n, dtype=bool), "g_trim")


def test_small_examples():
    assert max_clique(complete(3)).vertices == (0, 1, 2)
    assert len(brute_force_max_clique(complete(4))) == 4
    empty = ConsistencyGraph(5, np.zeros((5, 5), bool), "g_trim")
    assert len(max_clique(empty)) == 1
    two = ConsistencyGraph.from_edges(6, [(3, 4), (4, 5), (3, 5), (0, 1), (1, 2), (0, 2)])
    assert max_clique(two).vertices == (0, 1, 2) == brute_force_max_clique(two).vertices


def test_errors():
    with pytest.raises(ValueError):
        max_clique(ConsistencyGraph(0, np.zeros((0, 0), bool), "g_trim"))
    with pytest.raises(ValueError):
        max_clique(complete(3), time_budget=0)
    with pytest.raises(ValueError):
        brute_force_max_clique(complete(26))


def test_planted_clique():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 40, 0.2)
    A = g.adjacency.copy()
    planted = rng.choice(40, 8, replace=False)
    for a in planted:
        for b in planted:
            if a != b:
                A[a, b] = True
    g = ConsistencyGraph(40, A, "g_trim")
    c = max_clique(g)
    assert len(c) == 8 and is_clique(g, c.vertices)
    assert set(c.vertices) == set(planted.tolist())


@given(st.integers(0, 2**31))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(1, 19)), rng.uniform(0.1, 0.7))
    c, b = max_clique(g), brute_force_max_clique(g)
    assert c.vertices == b.vertices  # same size and the same lexicographic tie-break
    assert is_clique(g, c.vertices) and not c.approximate


@given(st.integers(0, 2**31))
def test_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 30, 0.4)
    perm = rng.permutation(30)
    A = g.adjacency[np.ix_(perm, perm)]
    assert len(max_clique(g)) == len(max_clique(ConsistencyGraph(30, A, "g_trim")))


@given(st.integers(0, 2**31))
def test_greedy_lower_bound(seed):
    g = random_graph(np.random.default_rng(seed), 50, 0.3)
    lb = greedy_clique(g)
    assert is_clique(g, lb) and len(max_clique(g)) >= len(lb)


def test_core_numbers_bound_clique():
    g = random_graph(np.random.default_rng(0), 60, 0.3)
    core, order = core_numbers(g)
    assert sorted(order) == list(range(60))
    assert len(max_clique(g)) <= core.max() + 1


def test_inlier_dominated():
    rng = np.random.default_rng(1)
    n, k = 60, 12
    A = rng.random((n, n)) < 0.1
    A = np.triu(A, 1)
    A |= A.T
    A[:k, :k] = True
    np.fill_diagonal(A, False)
    assert max_clique(ConsistencyGraph(n, A, "g_trim")).vertices == tuple(range(k))


def test_workers_same_result():
    g = random_graph(np.random.default_rng(5), 120, 0.3)
    assert max_clique(g, workers=1).vertices == max_clique(g, workers=4).vertices


def test_budget_marks_approximate():
    g = random_graph(np.random.default_rng(7), 400, 0.9)
    c = max_clique(g, time_budget=0.01)
    assert c.approximate and is_clique(g, c.vertices)
