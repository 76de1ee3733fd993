"""Normals, FPFH descriptors and label-filtered reciprocal matching.

FPFH follows the usual construction: for every neighbor pair a Darboux frame
yields the triple (alpha, phi, theta), each binned into 11 bins to form the
simplified histogram (SPFH); the final descriptor adds the distance-weighted
mean of the neighbors' SPFHs to the point's own SPFH.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from .io import SemanticPointCloud

N_BINS = 11
DESCRIPTOR_DIM = 3 * N_BINS


@dataclass(frozen=True)
class FeatureParams:
    voxel_size: float = 0.5
    normal_radius: float = 1.0
    fpfh_radius: float = 2.5
    include_unclassified: bool = True

    def validate(self) -> None:
        if min(self.voxel_size, self.normal_radius, self.fpfh_radius) <= 0:
            raise ValueError("feature radii and voxel size must be positive")


@dataclass(frozen=True)
class FpfhDescriptor:
    histogram: np.ndarray
    anchor_index: int


def voxel_downsample(cloud: SemanticPointCloud, voxel_size: float) -> SemanticPointCloud:
    """Centroid per (voxel, label) cell; output sorted by (label, voxel key)."""
    if len(cloud) == 0:
        return cloud
    cells = np.floor(cloud.points / voxel_size).astype(np.int64)
    keys = np.column_stack([cloud.labels, cells])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, cloud.points)
    return SemanticPointCloud(sums / counts[:, None], uniq[:, 0])


def _pairs_within(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered neighbor pairs (i != j) with distance <= radius."""
    if len(points) < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return i, j


def estimate_normals(cloud: SemanticPointCloud, radius: float, viewpoint=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Unit normals (least-variance direction of the radius neighborhood).

    Normals point toward ``viewpoint``. Points with fewer than three neighbors
    get the zero vector as an invalid marker.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    P = cloud.points
    n = len(P)
    normals = np.zeros((n, 3))
    if n == 0:
        return normals
    i, j = _pairs_within(P, radius)
    counts = np.bincount(i, minlength=n)
    # accumulate around the anchor point itself for numerical stability
    D = P[j] - P[i]
    s1 = np.zeros((n, 3))
    np.add.at(s1, i, D)
    s2 = np.zeros((n, 3, 3))
    np.add.at(s2, i, D[:, :, None] * D[:, None, :])
    valid = counts >= 3
    m = (counts[valid] + 1).astype(np.float64)  # the anchor contributes a zero offset
    mean = s1[valid] / m[:, None]
    cov = s2[valid] / m[:, None, None] - mean[:, :, None] * mean[:, None, :]
    _, vecs = np.linalg.eigh(cov)
    nv = vecs[:, :, 0]
    to_view = np.asarray(viewpoint, dtype=np.float64) - P[valid]
    flip = np.einsum("ij,ij->i", nv, to_view) < 0
    nv[flip] *= -1
    normals[valid] = nv / np.linalg.norm(nv, axis=1, keepdims=True)
    return normals


def _pair_features(p1, n1, p2, n2):
    """(theta, alpha, phi) per pair with the standard source/target selection."""
    dp = p2 - p1
    d = np.linalg.norm(dp, axis=1)
    d_safe = np.where(d > 0, d, 1.0)
    a1 = np.einsum("ij,ij->i", n1, dp) / d_safe
    a2 = np.einsum("ij,ij->i", n2, dp) / d_safe
    # the tolerance keeps exact ties (e.g. equal normals) from flipping with rounding noise
    swap = np.arccos(np.clip(np.abs(a1), 0, 1)) > np.arccos(np.clip(np.abs(a2), 0, 1)) + 1e-9
    u = np.where(swap[:, None], n2, n1)
    nt = np.where(swap[:, None], n1, n2)
    dp = np.where(swap[:, None], -dp, dp)
    phi = np.where(swap, -a2, a1)
    v = np.cross(dp, u)
    vn = np.linalg.norm(v, axis=1)
    ok = (vn > 1e-12) & (d > 0)
    v = v / np.where(vn > 0, vn, 1.0)[:, None]
    w = np.cross(u, v)
    alpha = np.einsum("ij,ij->i", v, nt)
    theta = np.arctan2(np.einsum("ij,ij->i", w, nt), np.einsum("ij,ij->i", u, nt))
    return theta, alpha, phi, ok


def _bin(values, lo, hi):
    b = np.floor(N_BINS * (values - lo) / (hi - lo)).astype(np.int64)
    return np.clip(b, 0, N_BINS - 1)


def compute_fpfh_array(cloud: SemanticPointCloud, normals: np.ndarray, radius: float) -> np.ndarray:
    """(N, 33) FPFH matrix; rows for points without a valid normal are zero."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    P = cloud.points
    n = len(P)
    valid = np.linalg.norm(normals, axis=1) > 0.5
    i, j = _pairs_within(P, radius)
    keep = valid[i] & valid[j]
    i, j = i[keep], j[keep]
    theta, alpha, phi, ok = _pair_features(P[i], normals[i], P[j], normals[j])
    i, j, theta, alpha, phi = i[ok], j[ok], theta[ok], alpha[ok], phi[ok]

    spfh = np.zeros((n, DESCRIPTOR_DIM))
    k = np.bincount(i, minlength=n).astype(np.float64)
    incr = 100.0 / np.where(k > 0, k, 1.0)
    for off, b in ((0, _bin(theta, -np.pi, np.pi)), (N_BINS, _bin(alpha, -1.0, 1.0)), (2 * N_BINS, _bin(phi, -1.0, 1.0))):
        np.add.at(spfh, (i, off + b), incr[i])

    dist = np.linalg.norm(P[j] - P[i], axis=1)
    W = csr_matrix((1.0 / dist, (i, j)), shape=(n, n))
    agg = W @ spfh
    for off in (0, N_BINS, 2 * N_BINS):
        block = agg[:, off:off + N_BINS]
        s = block.sum(axis=1, keepdims=True)
        block *= np.divide(100.0, s, out=np.zeros_like(s), where=s > 0)
    out = spfh + agg
    out[~valid] = 0.0
    return out


def compute_fpfh(cloud: SemanticPointCloud, normals: np.ndarray, radius: float) -> list[FpfhDescriptor]:
    hist = compute_fpfh_array(cloud, normals, radius)
    return [FpfhDescriptor(h, k) for k, h in enumerate(hist)]


def match_descriptors(src_desc, dst_desc, src_labels, dst_labels) -> tuple[np.ndarray, np.ndarray]:
    """Reciprocal nearest neighbors in descriptor space with equal labels.

    Returns ``(pairs, distances)`` where ``pairs`` is (M, 2) ``[src, dst]``
    sorted by descriptor distance (ties by src index). All-zero descriptors
    (invalid normals) never match.
    """
    S = np.asarray(src_desc, dtype=np.float64)
    D = np.asarray(dst_desc, dtype=np.float64)
    if len(S) == 0 or len(D) == 0:
        raise ValueError("descriptor sets must be non-empty")
    src_labels = np.asarray(src_labels)
    dst_labels = np.asarray(dst_labels)
    s_ok = np.flatnonzero(S.any(axis=1))
    d_ok = np.flatnonzero(D.any(axis=1))
    if len(s_ok) == 0 or len(d_ok) == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    dist_sd, nn_sd = cKDTree(D[d_ok]).query(S[s_ok])
    _, nn_ds = cKDTree(S[s_ok]).query(D[d_ok])
    recip = nn_ds[nn_sd] == np.arange(len(s_ok))
    src = s_ok[recip]
    dst = d_ok[nn_sd[recip]]
    dist = dist_sd[recip]
    same = src_labels[src] == dst_labels[dst]
    src, dst, dist = src[same], dst[same], dist[same]
    order = np.lexsort((src, dist))
    return np.column_stack([src[order], dst[order]]).astype(np.int64), dist[order]
