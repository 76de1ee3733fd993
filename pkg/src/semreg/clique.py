"""Maximum clique search over consistency graphs.

Vertex sets are Python ints used as bitsets. The exact solver is a
branch-and-bound with greedy-coloring upper bounds, run over root branches
in degeneracy order after k-core pruning. A second pass then extracts the
lexicographically smallest clique of the optimal size, so results do not
depend on search order or worker scheduling.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .consistency import ConsistencyGraph

BRUTE_FORCE_LIMIT = 25


@dataclass(frozen=True)
class Clique:
    vertices: tuple[int, ...]
    approximate: bool = False

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class CliqueParams:
    time_budget: float = 1.0
    workers: int = 1
    min_size: int = 3

    def validate(self) -> None:
        if self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")


class _OutOfTime(Exception):
    pass


def _bits(it) -> int:
    b = 0
    for v in it:
        b |= 1 << int(v)
    return b


def _members(bitset: int) -> list[int]:
    out = []
    while bitset:
        low = bitset & -bitset
        out.append(low.bit_length() - 1)
        bitset ^= low
    return out


def neighbor_bitsets(graph: ConsistencyGraph) -> list[int]:
    return [_bits(np.flatnonzero(row)) for row in graph.adjacency]


def core_numbers(graph: ConsistencyGraph) -> tuple[np.ndarray, list[int]]:
    """k-core number of every vertex and a degeneracy ordering (min-degree first)."""
    A = graph.adjacency
    n = graph.n_vertices
    deg = A.sum(axis=1).astype(np.int64)
    nbrs = [np.flatnonzero(r).tolist() for r in A]
    maxdeg = int(deg.max(initial=0))
    buckets: list[set[int]] = [set() for _ in range(maxdeg + 1)]
    for v in range(n):
        buckets[deg[v]].add(v)
    core = np.zeros(n, dtype=np.int64)
    removed = np.zeros(n, dtype=bool)
    order = []
    d = 0
    for _ in range(n):
        d = max(d - 1, 0)
        while not buckets[d]:
            d += 1
        v = min(buckets[d])
        buckets[d].discard(v)
        removed[v] = True
        core[v] = d
        order.append(v)
        for u in nbrs[v]:
            if not removed[u] and deg[u] > d:
                buckets[deg[u]].discard(u)
                deg[u] -= 1
                buckets[deg[u]].add(u)
    # core numbers are monotone along the peeling order
    running = 0
    for v in order:
        running = max(running, core[v])
        core[v] = running
    return core, order


def greedy_clique(graph: ConsistencyGraph, starts: int = 16) -> list[int]:
    """Cheap lower bound: grow cliques from the highest-degree vertices, each
    step adding the candidate with the most neighbors among the candidates."""
    A = graph.adjacency
    deg = A.sum(axis=1)
    best: list[int] = []
    for v in np.argsort(-deg, kind="stable")[:starts]:
        if deg[v] + 1 <= len(best):
            break
        clique = [int(v)]
        cand = A[v].copy()
        # number of candidate neighbors of every vertex, updated as cand shrinks
        inside = A[:, cand].sum(axis=1).astype(np.int64)
        while cand.any():
            score = np.where(cand, inside, -1)
            u = int(np.argmax(score))  # ties go to the lowest index
            clique.append(u)
            dropped = cand & ~A[u]
            cand &= A[u]
            if dropped.any():
                inside -= A[:, dropped].sum(axis=1)
        if len(clique) > len(best):
            best = clique
    return sorted(best)


def _color_order(P: int, nb: list[int]) -> tuple[list[int], list[int]]:
    """Greedy sequential coloring; returns vertices and their color bounds (ascending)."""
    order: list[int] = []
    colors: list[int] = []
    color = 0
    U = P
    while U:
        color += 1
        Q = U
        while Q:
            low = Q & -Q
            v = low.bit_length() - 1
            Q &= ~nb[v] & ~low
            U &= ~low
            order.append(v)
            colors.append(color)
    return order, colors


class _Search:
    def __init__(self, nb: list[int], lower: list[int], deadline: float):
        self.nb = nb
        self.best = list(lower)
        self.deadline = deadline
        self.lock = threading.Lock()
        self.ticks = 0

    def tick(self):
        self.ticks += 1
        if (self.ticks & 255) == 0 and time.perf_counter() > self.deadline:
            raise _OutOfTime

    def offer(self, clique: list[int]):
        with self.lock:
            if len(clique) > len(self.best):
                self.best = list(clique)

    def expand(self, C: list[int], P: int):
        self.tick()
        order, colors = _color_order(P, self.nb)
        for k in range(len(order) - 1, -1, -1):
            if len(C) + colors[k] <= len(self.best):
                return
            v = order[k]
            C.append(v)
            NP = P & self.nb[v]
            if NP:
                self.expand(C, NP)
            elif len(C) > len(self.best):
                self.offer(C)
            C.pop()
            P &= ~(1 << v)

    def root(self, v: int, later: int):
        P = self.nb[v] & later
        self.expand([v], P) if P else self.offer([v])


def _lex_smallest(nb: list[int], allowed: int, size: int, deadline: float) -> list[int] | None:
    """First clique of ``size`` in lexicographic order among ``allowed`` vertices."""
    ticks = 0

    def bound(P: int) -> int:
        return _color_order(P, nb)[1][-1] if P else 0

    def rec(C: list[int], P: int) -> list[int] | None:
        nonlocal ticks
        ticks += 1
        if (ticks & 255) == 0 and time.perf_counter() > deadline:
            raise _OutOfTime
        if len(C) == size:
            return list(C)
        if len(C) + bound(P) < size:
            return None
        for v in _members(P):
            rest = P & nb[v] & ~((2 << v) - 1)  # only higher-index vertices
            if len(C) + 1 + bin(rest).count("1") < size:
                continue
            C.append(v)
            found = rec(C, rest)
            C.pop()
            if found is not None:
                return found
        return None

    return rec([], allowed)


def max_clique(graph: ConsistencyGraph, time_budget: float = 1.0, workers: int = 1) -> Clique:
    """Maximum clique; ties go to the lexicographically smallest vertex set.

    If the search exceeds ``time_budget`` seconds the best clique found so far
    is returned with ``approximate=True``.
    """
    if graph.n_vertices == 0:
        raise ValueError("empty graph")
    if time_budget <= 0:
        raise ValueError("time_budget must be positive")
    deadline = time.perf_counter() + time_budget
    nb = neighbor_bitsets(graph)
    core, order = core_numbers(graph)
    search = _Search(nb, greedy_clique(graph) or [0], deadline)

    # root branches: v and its neighbors later in degeneracy order
    later_masks = []
    suffix = 0
    for v in reversed(order):
        later_masks.append((v, suffix))
        suffix |= 1 << v
    later_masks.reverse()

    def run_root(item):
        v, later = item
        if core[v] + 1 <= len(search.best):
            return
        # k-core pruning against the current best
        keep = _bits(u for u in _members(later & nb[v]) if core[u] + 1 > len(search.best))
        search.root(v, keep)

    approximate = False
    try:
        if workers > 1 and graph.n_vertices > 64:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for fut in [pool.submit(run_root, item) for item in later_masks]:
                    fut.result()
        else:
            for item in later_masks:
                run_root(item)
    except _OutOfTime:
        approximate = True

    best = sorted(search.best)
    if approximate:
        return Clique(tuple(best), approximate=True)

    size = len(best)
    allowed = _bits(np.flatnonzero(core + 1 >= size))
    try:
        lex = _lex_smallest(nb, allowed, size, deadline)
    except _OutOfTime:
        return Clique(tuple(best), approximate=False)
    return Clique(tuple(lex if lex is not None else best))


def brute_force_max_clique(graph: ConsistencyGraph) -> Clique:
    """Exhaustive enumeration of every clique (test oracle, <= 25 vertices)."""
    n = graph.n_vertices
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} vertices, got {n}")
    if n == 0:
        raise ValueError("empty graph")
    nbrs = [set(np.flatnonzero(r).tolist()) for r in graph.adjacency]
    best: list[tuple[int, ...]] = [(0,)]

    # depth-first over all cliques in ascending-vertex order: pre-order visits
    # equal-size cliques lexicographically, so the first one of maximum size wins
    def visit(clique: tuple[int, ...], cand: list[int]):
        if len(clique) > len(best[0]):
            best[0] = clique
        for k, v in enumerate(cand):
            visit(clique + (v,), [u for u in cand[k + 1:] if u in nbrs[v]])

    visit((), list(range(n)))
    return Clique(best[0])


def is_clique(graph: ConsistencyGraph, vertices) -> bool:
    vs = list(vertices)
    A = graph.adjacency
    return all(A[a, b] for a, b in combinations(vs, 2))
