"""Per-label curved-voxel clustering and Gaussian summaries of clusters."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .io import SemanticPointCloud


@dataclass(frozen=True)
class DcvcParams:
    """Curved-voxel grid: azimuth x polar angle x geometrically growing radial bins."""

    azimuth_res_deg: float = 2.0
    polar_res_deg: float = 1.5
    radial_base: float = 0.5
    radial_growth: float = 1.1
    min_cluster_size: int = 20

    def validate(self) -> None:
        if min(self.azimuth_res_deg, self.polar_res_deg, self.radial_base) <= 0:
            raise ValueError("DCVC resolutions must be positive")
        if self.radial_growth < 1.0:
            raise ValueError("radial_growth must be >= 1")
        if self.min_cluster_size < 3:
            raise ValueError("min_cluster_size must be >= 3")


@dataclass(frozen=True)
class Cluster:
    centroid: np.ndarray
    covariance: np.ndarray
    label: int
    count: int
    point_indices: np.ndarray


def cluster_stats(points) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population covariance ``(1/n) sum (p - mu)(p - mu)^T``."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) == 0:
        raise ValueError("cluster_stats needs at least one point")
    mu = P.mean(axis=0)
    D = P - mu
    cov = D.T @ D / len(P)
    return mu, 0.5 * (cov + cov.T)


def _radial_bin(r: np.ndarray, params: DcvcParams) -> np.ndarray:
    g = params.radial_growth
    if g == 1.0:
        return np.floor(r / params.radial_base).astype(np.int64)
    # bin k spans [b (g^k - 1)/(g - 1), b (g^{k+1} - 1)/(g - 1))
    return np.floor(np.log1p(r * (g - 1.0) / params.radial_base) / np.log(g)).astype(np.int64)


_OFFSETS = np.array([o for o in product((-1, 0, 1), repeat=3) if o != (0, 0, 0)], dtype=np.int64)


def _components(points: np.ndarray, params: DcvcParams) -> np.ndarray:
    """Connected-component id per point over 26-connected occupied curved voxels."""
    x, y, z = points.T
    rho = np.hypot(x, y)
    az_res = np.radians(params.azimuth_res_deg)
    pol_res = np.radians(params.polar_res_deg)
    n_az = int(np.ceil(2 * np.pi / az_res))

    ia = np.floor((np.arctan2(y, x) + np.pi) / az_res).astype(np.int64) % n_az
    ip = np.floor((np.arctan2(z, rho) + np.pi / 2) / pol_res).astype(np.int64)
    ir = _radial_bin(np.sqrt(rho**2 + z**2), params)

    # offset by one so neighbor lookups never go negative
    ip += 1
    ir += 1
    n_pol = int(ip.max()) + 2
    n_rad = int(ir.max()) + 2

    def encode(a, p, r):
        return (r * n_pol + p) * n_az + a

    keys = encode(ia, ip, ir)
    uniq, voxel_of_point = np.unique(keys, return_inverse=True)
    va = uniq % n_az
    vp = (uniq // n_az) % n_pol
    vr = uniq // (n_az * n_pol)

    rows, cols = [], []
    for da, dp, dr in _OFFSETS:
        nk = encode((va + da) % n_az, vp + dp, vr + dr)
        pos = np.searchsorted(uniq, nk)
        pos = np.minimum(pos, len(uniq) - 1)
        hit = uniq[pos] == nk
        rows.append(np.flatnonzero(hit))
        cols.append(pos[hit])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(uniq), len(uniq)))
    _, comp_of_voxel = connected_components(adj, directed=False)
    return comp_of_voxel[voxel_of_point.ravel()]


def dcvc_segment(cloud: SemanticPointCloud, label: int, params: DcvcParams = DcvcParams()) -> list[Cluster]:
    """Split the points carrying ``label`` into curved-voxel connected clusters.

    Clusters smaller than ``params.min_cluster_size`` are discarded. Output is
    ordered by the smallest point index of each cluster, so the result does not
    depend on internal voxel numbering.
    """
    params.validate()
    idx = np.flatnonzero(cloud.labels == label)
    if len(idx) < params.min_cluster_size:
        return []
    comp = _components(cloud.points[idx], params)
    order = np.argsort(comp, kind="stable")
    comp_sorted = comp[order]
    splits = np.flatnonzero(np.diff(comp_sorted)) + 1
    clusters = []
    for members in np.split(idx[order], splits):
        if len(members) < params.min_cluster_size:
            continue
        members = np.sort(members)
        mu, cov = cluster_stats(cloud.points[members])
        clusters.append(Cluster(mu, cov, int(label), len(members), members))
    clusters.sort(key=lambda c: int(c.point_indices[0]))
    return clusters


def segment_instances(cloud: SemanticPointCloud, labels, params: DcvcParams = DcvcParams()) -> list[Cluster]:
    """Clusters for every label in ``labels`` (sorted label order)."""
    out: list[Cluster] = []
    for label in sorted(labels):
        out.extend(dcvc_segment(cloud, label, params))
    return out
