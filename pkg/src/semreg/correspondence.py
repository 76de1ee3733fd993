"""Gaussian-summarized correspondences from semantic clusters and point features."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .clustering import Cluster, cluster_stats
from .errors import NoCorrespondencesError
from .io import SemanticPointCloud

SEMANTIC = "semantic"
FEATURE = "feature"


@dataclass(frozen=True)
class Correspondence:
    src_mean: np.ndarray
    dst_mean: np.ndarray
    src_cov: np.ndarray
    dst_cov: np.ndarray
    label: int
    origin: str
    score: float = 0.0  # descriptor distance for feature matches; lower is better


@dataclass(frozen=True)
class CorrespondenceParams:
    patch_k: int = 20
    patch_radius: float = 2.5
    feature_cap: int = 800
    semantic_cap: int | None = None

    def validate(self) -> None:
        if self.patch_k < 3:
            raise ValueError("patch_k must be >= 3")
        if self.patch_radius <= 0:
            raise ValueError("patch_radius must be positive")
        if self.feature_cap < 0 or (self.semantic_cap is not None and self.semantic_cap < 0):
            raise ValueError("caps must be non-negative")


def build_semantic_correspondences(src_clusters: Sequence[Cluster], dst_clusters: Sequence[Cluster]) -> list[Correspondence]:
    """All-to-all pairing of same-label clusters."""
    by_label: dict[int, list[Cluster]] = defaultdict(list)
    for c in dst_clusters:
        by_label[c.label].append(c)
    out = []
    for a in src_clusters:
        for b in by_label.get(a.label, ()):
            out.append(Correspondence(a.centroid, b.centroid, a.covariance, b.covariance, a.label, SEMANTIC))
    out.sort(key=lambda c: c.label)  # stable: keeps src-major order within a label
    return out


def _patch_covariances(cloud: SemanticPointCloud, anchors: np.ndarray, k: int, radius: float):
    """Covariance of up to ``k`` same-label neighbors within ``radius`` of each anchor.

    Returns ``(covs, ok)``; ``ok`` is False where the patch has fewer than 3
    neighbors (the anchor itself is not counted).
    """
    covs = np.zeros((len(anchors), 3, 3))
    ok = np.zeros(len(anchors), dtype=bool)
    for label in np.unique(cloud.labels[anchors]):
        members = np.flatnonzero(cloud.labels == label)
        tree = cKDTree(cloud.points[members])
        sel = np.flatnonzero(cloud.labels[anchors] == label)
        kk = min(k + 1, len(members))
        dist, nn = tree.query(cloud.points[anchors[sel]], k=kk, distance_upper_bound=radius)
        dist = dist.reshape(len(sel), kk)
        nn = nn.reshape(len(sel), kk)
        for row, a in enumerate(sel):
            hit = np.isfinite(dist[row])
            idx = members[nn[row][hit]]
            neighbors = idx[idx != anchors[a]][:k]
            if len(neighbors) < 3:
                continue
            patch = np.concatenate([[anchors[a]], neighbors])
            covs[a] = cluster_stats(cloud.points[patch])[1]
            ok[a] = True
    return covs, ok


def build_feature_correspondences(
    src_cloud: SemanticPointCloud,
    dst_cloud: SemanticPointCloud,
    matches: np.ndarray,
    patch_k: int = 20,
    patch_radius: float = 2.5,
    scores=None,
) -> list[Correspondence]:
    """One Gaussian correspondence per index match ``[src, dst]``.

    The mean is the matched point itself; the covariance comes from its
    ``patch_k`` nearest same-label neighbors. Matches whose patch has fewer
    than three neighbors are dropped.
    """
    matches = np.asarray(matches, dtype=np.int64).reshape(-1, 2)
    if len(matches) == 0:
        return []
    scores = np.zeros(len(matches)) if scores is None else np.asarray(scores, dtype=np.float64)
    src_cov, src_ok = _patch_covariances(src_cloud, matches[:, 0], patch_k, patch_radius)
    dst_cov, dst_ok = _patch_covariances(dst_cloud, matches[:, 1], patch_k, patch_radius)
    out = []
    for m in np.flatnonzero(src_ok & dst_ok):
        s, d = matches[m]
        out.append(
            Correspondence(
                src_cloud.points[s], dst_cloud.points[d], src_cov[m], dst_cov[m],
                int(src_cloud.labels[s]), FEATURE, float(scores[m]),
            )
        )
    return out


def merge(semantic: Sequence[Correspondence], feature: Sequence[Correspondence], params: CorrespondenceParams = CorrespondenceParams()) -> list[Correspondence]:
    """Semantic correspondences first, then features ranked by descriptor distance."""
    sem = list(semantic)
    if params.semantic_cap is not None:
        sem = sem[: params.semantic_cap]
    feat = sorted(feature, key=lambda c: c.score)[: params.feature_cap]
    if not sem and not feat:
        raise NoCorrespondencesError("no correspondences: registration impossible")
    return sem + feat


def stack(corrs: Sequence[Correspondence]) -> dict[str, np.ndarray]:
    """Column arrays for vectorized consumers."""
    return {
        "src_mean": np.array([c.src_mean for c in corrs], dtype=np.float64).reshape(-1, 3),
        "dst_mean": np.array([c.dst_mean for c in corrs], dtype=np.float64).reshape(-1, 3),
        "src_cov": np.array([c.src_cov for c in corrs], dtype=np.float64).reshape(-1, 3, 3),
        "dst_cov": np.array([c.dst_cov for c in corrs], dtype=np.float64).reshape(-1, 3, 3),
        "label": np.array([c.label for c in corrs], dtype=np.int64),
    }
