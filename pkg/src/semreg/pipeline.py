"""End-to-end registration: clusters and features -> consistency graph -> clique -> pose."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import correspondence as corr_mod
from .clique import max_clique
from .clustering import segment_instances
from .config import RunConfig
from .consistency import build_graph
from .correspondence import Correspondence
from .descriptors import compute_fpfh_array, estimate_normals, match_descriptors, voxel_downsample
from .errors import CliqueTooSmallError, RegistrationError
from .geometry import Pose, rotation_angle_deg
from .io import SemanticPointCloud
from .pose import gnc_tls_solve, weighted_horn

STAGES = ("clustering", "features", "correspondence", "graph", "clique", "pose", "icp")

# field order of the serialized record
RECORD_FIELDS = (
    "mode", "rotation", "translation", "inlier_count", "clique_size", "raw_correspondence_count",
    "semantic_count", "feature_count", "graph_edge_count", "approximate_clique", "icp_applied", "timings",
)


@dataclass(frozen=True)
class RegistrationResult:
    pose: Pose
    inlier_count: int
    raw_correspondence_count: int
    graph_edge_count: int
    timings: dict[str, float]
    mode: str
    approximate_clique: bool
    clique_size: int = 0
    semantic_count: int = 0
    feature_count: int = 0
    icp_applied: bool = False
    inliers: tuple[int, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.inlier_count > self.raw_correspondence_count:
            raise ValueError("inlier_count cannot exceed raw_correspondence_count")
        if any(v < 0 for v in self.timings.values()):
            raise ValueError("timings must be non-negative")

    @property
    def total_time(self) -> float:
        return self.timings.get("total", sum(self.timings.values()))

    def record(self, timings: bool = True) -> dict:
        out = {
            "mode": self.mode,
            "rotation": [[round(float(x), 12) + 0.0 for x in row] for row in self.pose.rotation],
            "translation": [round(float(x), 12) + 0.0 for x in self.pose.translation],
            "inlier_count": self.inlier_count,
            "clique_size": self.clique_size,
            "raw_correspondence_count": self.raw_correspondence_count,
            "semantic_count": self.semantic_count,
            "feature_count": self.feature_count,
            "graph_edge_count": self.graph_edge_count,
            "approximate_clique": self.approximate_clique,
            "icp_applied": self.icp_applied,
            "timings": {k: round(v, 6) for k, v in self.timings.items()} if timings else {},
        }
        return {k: out[k] for k in RECORD_FIELDS}

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.record(timings), separators=(",", ":"))


class _Clock:
    def __init__(self):
        self.times: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, stage: str):
        now = time.perf_counter()
        self.times[stage] = self.times.get(stage, 0.0) + (now - self._t)
        self._t = now


def _feature_track(src: SemanticPointCloud, dst: SemanticPointCloud, cfg: RunConfig):
    fp = cfg.features
    classes = set(cfg.labels.feature_classes)
    if fp.include_unclassified:
        classes.add(cfg.labels.unclassified_id)
    keep = sorted(classes)
    clouds = []
    descs = []
    for cloud in (src, dst):
        sub = cloud.subset(np.isin(cloud.labels, keep))
        down = voxel_downsample(sub, fp.voxel_size)
        if len(down) == 0:
            return None
        normals = estimate_normals(down, fp.normal_radius)
        clouds.append(down)
        descs.append(compute_fpfh_array(down, normals, fp.fpfh_radius))
    pairs, dist = match_descriptors(descs[0], descs[1], clouds[0].labels, clouds[1].labels)
    # only the best matches can survive the cap; skip patch fitting for the rest
    limit = 2 * cfg.correspondence.feature_cap
    return clouds[0], clouds[1], pairs[:limit], dist[:limit]


def gather_correspondences(src: SemanticPointCloud, dst: SemanticPointCloud, cfg: RunConfig, clock: _Clock | None = None):
    """Both correspondence tracks, merged; returns ``(corrs, n_semantic, n_feature)``."""
    clock = clock or _Clock()
    src_cl = segment_instances(src, cfg.labels.instance_classes, cfg.clustering)
    dst_cl = segment_instances(dst, cfg.labels.instance_classes, cfg.clustering)
    clock.lap("clustering")
    track = _feature_track(src, dst, cfg)
    clock.lap("features")
    semantic = corr_mod.build_semantic_correspondences(src_cl, dst_cl)
    feature: list[Correspondence] = []
    if track is not None and len(track[2]):
        s_down, d_down, pairs, dist = track
        feature = corr_mod.build_feature_correspondences(
            s_down, d_down, pairs, cfg.correspondence.patch_k, cfg.correspondence.patch_radius, dist,
        )
    merged = corr_mod.merge(semantic, feature, cfg.correspondence)
    n_sem = min(len(semantic), len(merged))
    clock.lap("correspondence")
    return merged, n_sem, len(merged) - n_sem


def register(
    src: SemanticPointCloud,
    dst: SemanticPointCloud,
    cfg: RunConfig | None = None,
    correspondence_hook: Callable[[list[Correspondence]], Sequence[Correspondence]] | None = None,
) -> RegistrationResult:
    """Estimate the pose mapping ``src`` coordinates into the ``dst`` frame.

    ``correspondence_hook`` may rewrite the merged correspondence list before
    graph construction (used to inject synthetic outliers).
    """
    cfg = cfg or RunConfig()
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("both clouds must be non-empty")
    clock = _Clock()
    start = clock._t
    corrs, n_sem, n_feat = gather_correspondences(src, dst, cfg, clock)
    if correspondence_hook is not None:
        corrs = list(correspondence_hook(corrs))
    min_size = cfg.clique.min_size
    if len(corrs) < max(2, min_size):
        raise CliqueTooSmallError(f"only {len(corrs)} correspondences; a clique of {min_size} is impossible")
    graph = build_graph(corrs, cfg.consistency.mode, cfg.consistency.thresholds())
    clock.lap("graph")
    clique = max_clique(graph, cfg.clique.time_budget, cfg.clique.workers)
    if len(clique) < min_size:
        raise CliqueTooSmallError(f"maximum clique has {len(clique)} vertices, need at least {min_size}")
    clock.lap("clique")
    members = list(clique.vertices)
    X = np.array([corrs[k].src_mean for k in members])
    Y = np.array([corrs[k].dst_mean for k in members])
    gnc = gnc_tls_solve(X, Y, cfg.gnc)
    pose = gnc.pose
    clock.lap("pose")
    icp_applied = False
    if cfg.icp.enabled:
        pose, icp_applied = refine_icp(src, dst, pose, cfg.icp.max_iterations, cfg.icp.tolerance, cfg.icp.gate)
    clock.lap("icp")
    timings = {s: clock.times.get(s, 0.0) for s in STAGES}
    timings["total"] = time.perf_counter() - start
    inliers = tuple(members[k] for k in gnc.inliers)
    return RegistrationResult(
        pose=pose,
        inlier_count=len(inliers),
        raw_correspondence_count=len(corrs),
        graph_edge_count=graph.edge_count,
        timings=timings,
        mode=cfg.consistency.mode,
        approximate_clique=clique.approximate,
        clique_size=len(clique),
        semantic_count=n_sem,
        feature_count=n_feat,
        icp_applied=icp_applied,
        inliers=inliers,
    )


def _mean_closest(tree: cKDTree, points: np.ndarray, gate: float) -> tuple[float, np.ndarray, np.ndarray]:
    d, nn = tree.query(points, distance_upper_bound=gate)
    hit = np.isfinite(d)
    return (float(d[hit].mean()) if hit.any() else np.inf), hit, nn


def refine_icp(src: SemanticPointCloud, dst: SemanticPointCloud, initial: Pose, max_iter: int = 30, tol: float = 1e-6, gate: float = 1.0) -> tuple[Pose, bool]:
    """Point-to-point ICP polish from ``initial``.

    Returns ``(pose, applied)``. ``applied`` is False when no source point has
    a destination neighbor within ``gate`` (the initial pose is returned). The
    result never has a larger mean gated closest-point residual than the
    initial pose.
    """
    S = np.asarray(src.points if isinstance(src, SemanticPointCloud) else src, dtype=np.float64)
    D = np.asarray(dst.points if isinstance(dst, SemanticPointCloud) else dst, dtype=np.float64)
    tree = cKDTree(D)
    best_err, hit, _ = _mean_closest(tree, initial.apply(S), gate)
    if np.count_nonzero(hit) < 3:
        return initial, False
    best = pose = initial
    for _ in range(max_iter):
        moved = pose.apply(S)
        err, hit, nn = _mean_closest(tree, moved, gate)
        if np.count_nonzero(hit) < 3:
            break
        try:
            pose = weighted_horn(S[hit], D[nn[hit]])
        except RegistrationError:
            break
        new_err = _mean_closest(tree, pose.apply(S), gate)[0]
        if new_err < best_err:
            step = np.linalg.norm(pose.translation - best.translation) + np.radians(rotation_angle_deg(pose.rotation @ best.rotation.T))
            best, best_err = pose, new_err
            if step < tol:
                break
        else:
            break
    return best, True
