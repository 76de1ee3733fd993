"""Seeded synthetic labeled scenes with known ground truth.

A scene is a set of Gaussian instance clusters (cars, trunks, poles, ...)
scattered over a square extent, together with feature-class surfaces:
building boxes, fence segments and a flat ground. Scans are derived from a
scene by a rigid motion, per-point noise and an overlap crop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correspondence import Correspondence
from .geometry import Pose, random_rotation, rot_z
from .io import BUILDING, CAR, FENCE, POLE, ROAD, TRUNK, SemanticPointCloud


class PackingError(ValueError):
    """Requested clusters cannot be placed with the required separation."""


@dataclass(frozen=True)
class SceneSpec:
    instance_counts: dict[int, int] = field(default_factory=lambda: {CAR: 6, TRUNK: 8, POLE: 6})
    extent: float = 60.0  # side of the square footprint, meters
    points_per_cluster: int = 150
    eigenvalue_range: tuple[float, float] = (0.02, 0.8)  # m^2
    min_separation: float = 5.0
    n_buildings: int = 4
    building_size: tuple[float, float] = (6.0, 14.0)
    building_height: float = 6.0
    n_fences: int = 4
    fence_length: tuple[float, float] = (6.0, 15.0)
    fence_height: float = 1.5
    surface_density: float = 1.5  # points per m^2
    ground: bool = True
    ground_density: float = 0.2
    ground_label: int = ROAD
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.eigenvalue_range
        if not (0 < lo <= hi):
            raise ValueError("eigenvalue_range must be positive and ordered")
        if self.surface_density <= 0 or self.ground_density <= 0 or self.points_per_cluster <= 0:
            raise ValueError("densities must be positive")
        if self.extent <= 0 or self.min_separation < 0:
            raise ValueError("extent must be positive and min_separation non-negative")
        if any(c < 0 for c in self.instance_counts.values()):
            raise ValueError("instance counts must be non-negative")


@dataclass(frozen=True)
class SceneCluster:
    label: int
    mean: np.ndarray
    covariance: np.ndarray
    point_indices: np.ndarray


@dataclass(frozen=True)
class Scene:
    cloud: SemanticPointCloud
    clusters: list[SceneCluster]
    spec: SceneSpec


@dataclass(frozen=True)
class HalfSpace:
    """Keep points with ``normal . x <= offset``."""

    normal: tuple[float, float, float] = (1.0, 0.0, 0.0)
    offset: float = 0.0

    def mask(self, points: np.ndarray) -> np.ndarray:
        return points @ np.asarray(self.normal, dtype=np.float64) <= self.offset


@dataclass(frozen=True)
class RangeGate:
    """Keep points whose horizontal range from ``center`` is within [min_range, max_range]."""

    max_range: float
    min_range: float = 0.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def mask(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points[:, :2] - np.asarray(self.center[:2], dtype=np.float64), axis=1)
        return (r >= self.min_range) & (r <= self.max_range)


def _place(rng: np.random.Generator, n: int, half: float, sep: float, taken: list[np.ndarray], tries: int = 200) -> list[np.ndarray]:
    """Rejection-sample ``n`` xy positions at least ``sep`` from each other and ``taken``."""
    # a quick area bound catches clearly impossible requests before sampling
    if n and sep > 0 and (n + len(taken)) * (math.sqrt(3) / 2) * sep**2 > (2 * half + sep) ** 2:
        raise PackingError(f"cannot pack {n} clusters with separation {sep} m in a {2 * half} m extent")
    out: list[np.ndarray] = []
    for _ in range(n):
        for _ in range(tries):
            p = rng.uniform(-half, half, 2)
            if all(np.linalg.norm(p - q) >= sep for q in taken + out):
                out.append(p)
                break
        else:
            raise PackingError(f"cannot pack {n} clusters with separation {sep} m in a {2 * half} m extent")
    return out


def _box_walls(rng, center, size, height, density):
    """Points on the four vertical faces of an axis-aligned box."""
    sx, sy = size
    pts = []
    for axis, length, span in ((0, sx, sy), (1, sy, sx)):
        n = max(int(density * length * height), 1)
        for side in (-0.5, 0.5):
            u = rng.uniform(-0.5, 0.5, n) * length
            z = rng.uniform(0.0, height, n)
            face = np.zeros((n, 3))
            face[:, axis] = u
            face[:, 1 - axis] = side * span
            face[:, 2] = z
            pts.append(face)
    P = np.concatenate(pts)
    P[:, :2] += center
    return P


def generate_scene(spec: SceneSpec = SceneSpec()) -> Scene:
    """Sample a labeled scene; identical specs give identical scenes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    half = spec.extent / 2.0
    chunks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    clusters: list[SceneCluster] = []
    n_points = 0

    def add(points, label):
        nonlocal n_points
        chunks.append(points)
        labels.append(np.full(len(points), label, dtype=np.int64))
        n_points += len(points)

    taken: list[np.ndarray] = []
    # buildings first so instances keep clear of them
    for _ in range(spec.n_buildings):
        size = rng.uniform(*spec.building_size, 2)
        c = _place(rng, 1, half - size.max() / 2, spec.min_separation + size.max() / 2, taken)[0]
        taken.append(c)
        add(_box_walls(rng, c, size, spec.building_height, spec.surface_density), BUILDING)
    for _ in range(spec.n_fences):
        length = rng.uniform(*spec.fence_length)
        c = rng.uniform(-half, half, 2)
        heading = rng.uniform(0, np.pi)
        n = max(int(spec.surface_density * length * spec.fence_height), 1)
        u = rng.uniform(-0.5, 0.5, n) * length
        P = np.column_stack([u, rng.normal(0.0, 0.02, n), rng.uniform(0.0, spec.fence_height, n)])
        P = P @ rot_z(heading).T
        P[:, :2] += c
        add(P, FENCE)

    lo, hi = spec.eigenvalue_range
    order = sorted(spec.instance_counts)
    total = sum(spec.instance_counts[k] for k in order)
    sites = _place(rng, total, half, spec.min_separation, taken)
    k = 0
    for label in order:
        for _ in range(spec.instance_counts[label]):
            V = random_rotation(rng)
            cov = V @ np.diag(rng.uniform(lo, hi, 3)) @ V.T
            mean = np.array([sites[k][0], sites[k][1], 1.0 + 2.0 * np.sqrt(hi)])
            k += 1
            P = rng.multivariate_normal(mean, cov, spec.points_per_cluster, method="cholesky")
            idx = np.arange(n_points, n_points + len(P))
            clusters.append(SceneCluster(label, mean, cov, idx))
            add(P, label)

    if spec.ground:
        n = max(int(spec.ground_density * spec.extent**2), 1)
        G = np.column_stack([rng.uniform(-half, half, (n, 2)), rng.normal(0.0, 0.02, n)])
        add(G, spec.ground_label)

    if not chunks:
        raise ValueError("scene spec produces no points")
    cloud = SemanticPointCloud(np.concatenate(chunks), np.concatenate(labels))
    return Scene(cloud, clusters, spec)


def derive_pair(
    scene: Scene | SemanticPointCloud,
    pose: Pose,
    noise_sigma: float = 0.0,
    crop: HalfSpace | RangeGate | None = None,
    seed: int = 0,
) -> SemanticPointCloud:
    """``pose`` applied to the scene, plus isotropic noise, then cropped.

    The crop is evaluated in the output frame.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    cloud = scene.cloud if isinstance(scene, Scene) else scene
    P = pose.apply(cloud.points)
    if noise_sigma > 0:
        P = P + np.random.default_rng(seed).normal(0.0, noise_sigma, P.shape)
    out = SemanticPointCloud(P, cloud.labels)
    if crop is not None:
        keep = crop.mask(out.points)
        if not keep.any():
            raise ValueError("crop removes every point")
        out = out.subset(keep)
    return out


def scan_from(scene: Scene, sensor_pose: Pose, max_range: float = 30.0, noise_sigma: float = 0.0, seed: int = 0) -> SemanticPointCloud:
    """The scene as seen from ``sensor_pose`` (sensor-to-world), range gated."""
    return derive_pair(scene, sensor_pose.inverse(), noise_sigma, RangeGate(max_range), seed)


def inject_outlier_matches(corrs, fraction: float, seed: int = 0) -> list[Correspondence]:
    """Append ``ceil(fraction / (1 - fraction) * n)`` random same-label pairings.

    Each outlier pairs the source side of one correspondence with the
    destination side of another one carrying the same label. Labels that appear
    only once fall back to pairings across the whole set.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    corrs = list(corrs)
    n = len(corrs)
    n_out = math.ceil(fraction / (1.0 - fraction) * n - 1e-9) if fraction > 0 else 0
    if n_out == 0 or n == 0:
        return corrs
    rng = np.random.default_rng(seed)
    labels = np.array([c.label for c in corrs])
    out = list(corrs)
    for _ in range(n_out):
        a = int(rng.integers(n))
        pool = np.flatnonzero((labels == labels[a]) & (np.arange(n) != a))
        if len(pool) == 0:
            pool = np.flatnonzero(np.arange(n) != a) if n > 1 else np.array([a])
        b = int(pool[rng.integers(len(pool))])
        ca, cb = corrs[a], corrs[b]
        out.append(Correspondence(ca.src_mean, cb.dst_mean, ca.src_cov, cb.dst_cov, ca.label, ca.origin, ca.score))
    return out


def loop_trajectory(n_per_lap: int = 120, radius: float = 20.0, laps: int = 2, lateral: float = 8.0, seed: int = 0) -> list[Pose]:
    """Poses driving a circle several times, each lap with its own radial
    offset and phase shift, so revisits occur at a range of gaps."""
    rng = np.random.default_rng(seed)
    poses = []
    for _ in range(laps):
        dr = rng.uniform(-lateral, lateral)
        phase = rng.uniform(-0.3, 0.3)
        direction = 1.0 if rng.random() < 0.5 else -1.0
        for s in range(n_per_lap):
            a = direction * 2 * np.pi * s / n_per_lap + phase
            r = radius + dr + 1.5 * np.sin(3 * a)
            pos = np.array([r * np.cos(a), r * np.sin(a), 0.0])
            heading = a + direction * np.pi / 2
            poses.append(Pose(rot_z(heading), pos))
    return poses


def random_walk_trajectory(n: int, step: float = 1.0, seed: int = 0) -> list[Pose]:
    """Planar random walk with smoothly drifting heading."""
    rng = np.random.default_rng(seed)
    heading = rng.uniform(-np.pi, np.pi)
    pos = np.zeros(3)
    poses = []
    for _ in range(n):
        poses.append(Pose(rot_z(heading), pos.copy()))
        heading += rng.normal(0.0, 0.15)
        pos = pos + step * np.array([np.cos(heading), np.sin(heading), 0.0])
    return poses
