"""Pairwise invariant checks and the consistency graph.

Two checks are provided for a pair of correspondences (i, j):

* length consistency: the segment ``src_i - src_j`` and ``dst_i - dst_j`` must
  have equal length up to ``2 * noise_bound``;
* Gaussian consistency: the difference Gaussians
  ``a_ij ~ N(mu_i - mu_j, S_i + S_j)`` (source) and ``b_ij`` (destination) must
  be close in 2-Wasserstein distance.

The raw Wasserstein distance between ``a_ij`` and ``b_ij`` depends on the
relative rotation of the two scans. To make the check rigid-invariant both
difference Gaussians are first written in a pair-local frame whose first axis
is the segment direction and whose second axis is fixed by the summed
covariance (its coupling with the segment, or the principal axis of its
block orthogonal to the segment; that axis only has a sign ambiguity, so both
signs are tried). The distance is the minimum over these frame choices. In
the local frame both means are ``(length, 0, 0)``, so the positional term
reduces to the squared length difference and the remainder is the shape term.
Swapping the destinations of two correspondences reverses the segment,
which flips the handedness of the local frame relative to the covariance.
That is what rejects crossed matches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondence import Correspondence, stack

L_TRIM = "l_trim"
G_TRIM = "g_trim"
MODES = (L_TRIM, G_TRIM)

_TINY = 1e-12


@dataclass(frozen=True)
class TrimThresholds:
    noise_bound: float = 0.2
    shape_slack: float = 0.1  # m^2
    g_trim_bound_override: float | None = None

    @property
    def g_trim_bound(self) -> float:
        if self.g_trim_bound_override is not None:
            return self.g_trim_bound_override
        return float(np.sqrt(self.noise_bound**2 + self.shape_slack))

    def validate(self) -> None:
        if self.noise_bound <= 0 or self.g_trim_bound <= 0 or self.shape_slack < 0:
            raise ValueError("consistency thresholds must be positive")


@dataclass(frozen=True)
class ConsistencyGraph:
    n_vertices: int
    adjacency: np.ndarray  # (n, n) bool, symmetric, zero diagonal
    mode: str

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=bool)
        if A.shape != (self.n_vertices, self.n_vertices):
            raise ValueError("adjacency shape does not match n_vertices")
        if np.any(np.diag(A)) or not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric without self-loops")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    @classmethod
    def from_edges(cls, n: int, edges, mode: str = G_TRIM) -> ConsistencyGraph:
        A = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            A[i, j] = A[j, i] = True
        return cls(n, A, mode)


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------


def _check_psd(C: np.ndarray, name: str, tol: float) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64).reshape(3, 3)
    scale = max(1.0, float(np.abs(C).max()))
    if np.abs(C - C.T).max() > tol * scale:
        raise ValueError(f"{name} is not symmetric")
    C = 0.5 * (C + C.T)
    if np.linalg.eigvalsh(C)[0] < -tol * scale:
        raise ValueError(f"{name} is not positive semidefinite")
    return C


def sqrtm_psd(S) -> np.ndarray:
    """Symmetric square root via eigendecomposition, eigenvalues clamped at 0."""
    S = np.asarray(S, dtype=np.float64)
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def wasserstein_sq(mean_a, cov_a, mean_b, cov_b, tol: float = 1e-9) -> float:
    """Squared 2-Wasserstein distance between N(mean_a, cov_a) and N(mean_b, cov_b)."""
    A = _check_psd(cov_a, "cov_a", tol)
    B = _check_psd(cov_b, "cov_b", tol)
    dm = np.asarray(mean_a, dtype=np.float64) - np.asarray(mean_b, dtype=np.float64)
    rA = sqrtm_psd(A)
    cross = np.linalg.eigvalsh(0.5 * ((rA @ B @ rA) + (rA @ B @ rA).T))
    shape = np.trace(A) + np.trace(B) - 2.0 * np.sqrt(np.clip(cross, 0.0, None)).sum()
    return max(float(dm @ dm + shape), 0.0)


def l_trim_consistent(ci: Correspondence, cj: Correspondence, noise_bound: float) -> bool:
    la = np.linalg.norm(np.asarray(ci.src_mean) - cj.src_mean)
    lb = np.linalg.norm(np.asarray(ci.dst_mean) - cj.dst_mean)
    return bool(abs(la - lb) <= 2.0 * noise_bound)


def difference_gaussian(mean_i, cov_i, mean_j, cov_j) -> tuple[np.ndarray, np.ndarray]:
    """Distribution of ``x_i - x_j`` for independent Gaussian endpoints."""
    return np.asarray(mean_i, float) - np.asarray(mean_j, float), np.asarray(cov_i, float) + np.asarray(cov_j, float)


def _local_frames(d: np.ndarray, S: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Segment length and the candidate pair-local frames (columns e1, e2, e3)."""
    L = float(np.linalg.norm(d))
    e1 = d / L if L > _TINY else np.array([1.0, 0.0, 0.0])
    helper = np.eye(3)[int(np.argmin(np.abs(e1)))]
    u = np.cross(e1, helper)
    u /= np.linalg.norm(u)
    v = np.cross(e1, u)
    phi = 0.5 * np.arctan2(2.0 * u @ S @ v, u @ S @ u - v @ S @ v)
    e_principal = np.cos(phi) * u + np.sin(phi) * v
    g = S @ e1 - (e1 @ S @ e1) * e1
    gn = np.linalg.norm(g)
    e_coupling = g / gn if gn > _TINY * max(1.0, np.trace(S)) else e_principal

    def frame(e2):
        return np.column_stack([e1, e2, np.cross(e1, e2)])

    return L, [frame(e_coupling), frame(e_principal), frame(-e_principal)]


def g_trim_distance_sq(ci: Correspondence, cj: Correspondence) -> float:
    """Rigid-invariant squared Wasserstein distance between the two G-TRIMs."""
    da, Sa = difference_gaussian(ci.src_mean, ci.src_cov, cj.src_mean, cj.src_cov)
    db, Sb = difference_gaussian(ci.dst_mean, ci.dst_cov, cj.dst_mean, cj.dst_cov)
    La, Fa = _local_frames(da, Sa)
    Lb, Fb = _local_frames(db, Sb)
    ma = np.array([La, 0.0, 0.0])
    mb = np.array([Lb, 0.0, 0.0])
    # (coupling, coupling), (principal, principal), (principal, flipped principal)
    combos = ((0, 0), (1, 1), (1, 2))
    return min(wasserstein_sq(ma, Fa[p].T @ Sa @ Fa[p], mb, Fb[q].T @ Sb @ Fb[q]) for p, q in combos)


def g_trim_consistent(ci: Correspondence, cj: Correspondence, bound: float) -> bool:
    return g_trim_distance_sq(ci, cj) <= bound * bound


def consistent(ci: Correspondence, cj: Correspondence, mode: str, thresholds: TrimThresholds) -> bool:
    if mode == L_TRIM:
        return l_trim_consistent(ci, cj, thresholds.noise_bound)
    if mode == G_TRIM:
        return g_trim_consistent(ci, cj, thresholds.g_trim_bound)
    raise ValueError(f"unknown consistency mode {mode!r}")


# ---------------------------------------------------------------------------
# batched kernels used by build_graph
# ---------------------------------------------------------------------------


def _trace_sqrt_product(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``Tr((A^1/2 B A^1/2)^1/2)`` for stacks of 3x3 PSD matrices.

    The eigenvalues of ``A^1/2 B A^1/2`` equal those of ``A B``; they are
    obtained in closed form from the traces of ``A B`` and ``(A B)^2``
    (trigonometric solution of the characteristic cubic), which avoids a
    batched eigendecomposition.
    """
    M = np.einsum("nij,njk->nik", A, B)
    tr = np.einsum("nii->n", M)
    tr2 = np.einsum("nij,nji->n", M, M)
    m = tr / 3.0
    K = M - m[:, None, None] * np.eye(3)
    p = np.maximum((tr2 - 2.0 * m * tr + 3.0 * m * m) / 6.0, 0.0)
    q = np.linalg.det(K) / 2.0
    sp = np.sqrt(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(p > 1e-30, q / (sp * sp * sp), 0.0)
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    c, s = np.cos(phi), np.sin(phi)
    l1 = m + 2.0 * sp * c
    l2 = m - sp * (c + np.sqrt(3.0) * s)
    l3 = m - sp * (c - np.sqrt(3.0) * s)
    return sum(np.sqrt(np.maximum(l, 0.0)) for l in (l1, l2, l3))


def _bures_batch(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("nii->n", A) + np.einsum("nii->n", B) - 2.0 * _trace_sqrt_product(A, B)


def _local_frames_batch(d: np.ndarray, S: np.ndarray):
    L = np.linalg.norm(d, axis=1)
    e1 = np.where(L[:, None] > _TINY, d / np.where(L > _TINY, L, 1.0)[:, None], np.array([1.0, 0.0, 0.0]))
    helper = np.eye(3)[np.argmin(np.abs(e1), axis=1)]
    u = np.cross(e1, helper)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = np.cross(e1, u)
    Su = np.einsum("nij,nj->ni", S, u)
    Sv = np.einsum("nij,nj->ni", S, v)
    Se1 = np.einsum("nij,nj->ni", S, e1)
    buu = np.einsum("ni,ni->n", u, Su)
    buv = np.einsum("ni,ni->n", u, Sv)
    bvv = np.einsum("ni,ni->n", v, Sv)
    phi = 0.5 * np.arctan2(2.0 * buv, buu - bvv)
    e_pr = np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v
    g = Se1 - np.einsum("ni,ni->n", e1, Se1)[:, None] * e1
    gn = np.linalg.norm(g, axis=1)
    trS = np.einsum("nii->n", S)
    use_g = gn > _TINY * np.maximum(1.0, trS)
    e_cp = np.where(use_g[:, None], g / np.where(gn > 0, gn, 1.0)[:, None], e_pr)

    def rotated(e2):
        F = np.stack([e1, e2, np.cross(e1, e2)], axis=2)
        return np.einsum("nji,njk,nkl->nil", F, S, F)

    return L, rotated(e_cp), rotated(e_pr)


_FLIP = np.array([1.0, -1.0, -1.0])


def _g_trim_distance_batch(a_d, a_S, b_d, b_S) -> np.ndarray:
    La, Sa_cp, Sa_pr = _local_frames_batch(a_d, a_S)
    Lb, Sb_cp, Sb_pr = _local_frames_batch(b_d, b_S)
    shape = np.minimum(_bures_batch(Sa_cp, Sb_cp), _bures_batch(Sa_pr, Sb_pr))
    Sb_flip = Sb_pr * _FLIP[None, :, None] * _FLIP[None, None, :]
    shape = np.minimum(shape, _bures_batch(Sa_pr, Sb_flip))
    return np.maximum((La - Lb) ** 2 + shape, 0.0)


def pair_measures(corrs, i: np.ndarray, j: np.ndarray, mode: str) -> np.ndarray:
    """Per-pair statistic: |length gap| for l_trim, squared G-TRIM distance for g_trim."""
    arr = corrs if isinstance(corrs, dict) else stack(corrs)
    a_d = arr["src_mean"][i] - arr["src_mean"][j]
    b_d = arr["dst_mean"][i] - arr["dst_mean"][j]
    if mode == L_TRIM:
        return np.abs(np.linalg.norm(a_d, axis=1) - np.linalg.norm(b_d, axis=1))
    if mode == G_TRIM:
        a_S = arr["src_cov"][i] + arr["src_cov"][j]
        b_S = arr["dst_cov"][i] + arr["dst_cov"][j]
        return _g_trim_distance_batch(a_d, a_S, b_d, b_S)
    raise ValueError(f"unknown consistency mode {mode!r}")


def build_graph(corrs, mode: str = G_TRIM, thresholds: TrimThresholds = TrimThresholds(), chunk: int = 65536) -> ConsistencyGraph:
    """Test every pair of correspondences and connect the consistent ones."""
    thresholds.validate()
    if mode not in MODES:
        raise ValueError(f"unknown consistency mode {mode!r}")
    n = len(corrs)
    if n < 2:
        raise ValueError("a consistency graph needs at least two correspondences")
    arr = stack(corrs)
    iu, ju = np.triu_indices(n, k=1)
    A = np.zeros((n, n), dtype=bool)
    for start in range(0, len(iu), chunk):
        i, j = iu[start:start + chunk], ju[start:start + chunk]
        if mode == L_TRIM:
            ok = pair_measures(arr, i, j, L_TRIM) <= 2.0 * thresholds.noise_bound
        else:
            # the squared length gap is part of the distance: pre-filter cheaply
            gap = pair_measures(arr, i, j, L_TRIM)
            ok = gap <= thresholds.g_trim_bound
            sel = np.flatnonzero(ok)
            if len(sel):
                ok[sel] = pair_measures(arr, i[sel], j[sel], G_TRIM) <= thresholds.g_trim_bound**2
        A[i[ok], j[ok]] = True
    A |= A.T
    return ConsistencyGraph(n, A, mode)
