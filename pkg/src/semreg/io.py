"""Readers and writers for KITTI-style scans, SemanticKITTI labels and pose files.

Formats
-------
``.bin``    little-endian float32 records ``x y z intensity`` (16 bytes each)
``.label``  little-endian uint32 per point; low 16 bits = semantic class,
            high 16 bits = instance id (ignored here)
poses       one pose per line, 12 reals = row-major 3x4 ``[R | t]``
label cfg   YAML mapping with keys ``instance_classes``, ``feature_classes``,
            ``unclassified_id`` and ``remap`` (raw id -> canonical id)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .errors import ScanFormatError
from .geometry import Pose, project_to_so3

# SemanticKITTI raw ids -> the 20-class training ids.
SEMANTIC_KITTI_REMAP: dict[int, int] = {
    0: 0, 1: 0, 10: 1, 11: 2, 13: 5, 15: 3, 16: 5, 18: 4, 20: 5, 30: 6,
    31: 7, 32: 8, 40: 9, 44: 10, 48: 11, 49: 12, 50: 13, 51: 14, 52: 0,
    60: 9, 70: 15, 71: 16, 72: 17, 80: 18, 81: 19, 99: 0, 252: 1, 253: 7,
    254: 6, 255: 8, 256: 5, 257: 5, 258: 4, 259: 5,
}

CAR, ROAD, BUILDING, FENCE, VEGETATION, TRUNK, POLE, TRAFFIC_SIGN = 1, 9, 13, 14, 15, 16, 18, 19
UNLABELED = 0


@dataclass(frozen=True)
class SemanticPointCloud:
    """Points (N, 3) in meters with one canonical semantic label per point."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        lab = np.array(self.labels, dtype=np.int64).reshape(-1)
        if len(pts) != len(lab):
            raise ValueError(f"{len(pts)} points but {len(lab)} labels")
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(pts), axis=1))[0])
            raise ValueError(f"non-finite coordinate at point {bad}")
        if np.any(lab < 0):
            raise ValueError("labels must be non-negative")
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.points)

    def with_labels(self, labels) -> SemanticPointCloud:
        return SemanticPointCloud(self.points, labels)

    def with_points(self, points) -> SemanticPointCloud:
        return SemanticPointCloud(points, self.labels)

    def subset(self, mask_or_index) -> SemanticPointCloud:
        return SemanticPointCloud(self.points[mask_or_index], self.labels[mask_or_index])


@dataclass(frozen=True)
class LabelConfig:
    instance_classes: frozenset[int] = frozenset({CAR, TRUNK, POLE, TRAFFIC_SIGN})
    feature_classes: frozenset[int] = frozenset({BUILDING, FENCE, VEGETATION})
    unclassified_id: int = UNLABELED
    remap: Mapping[int, int] = field(default_factory=lambda: dict(SEMANTIC_KITTI_REMAP))

    def __post_init__(self):
        object.__setattr__(self, "instance_classes", frozenset(int(x) for x in self.instance_classes))
        object.__setattr__(self, "feature_classes", frozenset(int(x) for x in self.feature_classes))
        object.__setattr__(self, "remap", {int(k): int(v) for k, v in dict(self.remap).items()})
        overlap = self.instance_classes & self.feature_classes
        if overlap:
            raise ValueError(f"classes {sorted(overlap)} are both instance and feature classes")
        if self.unclassified_id in self.instance_classes | self.feature_classes:
            raise ValueError("unclassified_id must not be an instance or feature class")

    def inverse_remap(self) -> dict[int, int]:
        """Canonical id -> smallest raw id mapping to it (used when exporting)."""
        inv: dict[int, int] = {}
        for raw, canon in sorted(self.remap.items()):
            inv.setdefault(canon, raw)
        return inv


def load_label_config(path) -> LabelConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    known = {"instance_classes", "feature_classes", "unclassified_id", "remap"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown label config keys: {sorted(unknown)}")
    return LabelConfig(**data)


def load_scan(path, unclassified_id: int = UNLABELED) -> SemanticPointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise ScanFormatError(f"{path}: {len(raw)} bytes is not a whole number of 16-byte records (truncated record)")
    rec = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    xyz = rec[:, :3]
    finite = np.all(np.isfinite(xyz), axis=1)
    if not np.all(finite):
        raise ScanFormatError(f"{path}: non-finite coordinate in record {int(np.flatnonzero(~finite)[0])}")
    return SemanticPointCloud(xyz.astype(np.float64), np.full(len(xyz), unclassified_id, dtype=np.int64))


def write_scan(path, cloud: SemanticPointCloud, intensity: float = 0.0) -> None:
    rec = np.empty((len(cloud), 4), dtype="<f4")
    rec[:, :3] = cloud.points
    rec[:, 3] = intensity
    Path(path).write_bytes(rec.tobytes())


def load_labels(path, cloud: SemanticPointCloud, cfg: LabelConfig) -> SemanticPointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 4:
        raise ScanFormatError(f"{path}: {len(raw)} bytes is not a whole number of 4-byte label records")
    values = np.frombuffer(raw, dtype="<u4")
    if len(values) != len(cloud):
        raise ScanFormatError(f"{path}: {len(values)} label records for a cloud of {len(cloud)} points")
    sem = (values & 0xFFFF).astype(np.int64)
    lut_size = max(int(sem.max(initial=0)), max(cfg.remap, default=0)) + 1
    lut = np.full(lut_size, cfg.unclassified_id, dtype=np.int64)
    for k, v in cfg.remap.items():
        lut[k] = v
    return cloud.with_labels(lut[sem])


def write_labels(path, cloud: SemanticPointCloud, cfg: LabelConfig | None = None) -> None:
    """Write canonical labels back as raw SemanticKITTI ids (inverse of the remap)."""
    labels = cloud.labels
    if cfg is not None:
        inv = cfg.inverse_remap()
        labels = np.array([inv.get(int(l), int(l)) for l in labels], dtype=np.int64)
    Path(path).write_bytes(labels.astype("<u4").tobytes())


def load_poses(path) -> list[Pose]:
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 12:
                raise ScanFormatError(f"{path}:{lineno}: expected 12 values, found {len(fields)}")
            try:
                M = np.array([float(x) for x in fields]).reshape(3, 4)
            except ValueError as exc:
                raise ScanFormatError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(M)):
                raise ScanFormatError(f"{path}:{lineno}: non-finite value")
            poses.append(Pose(project_to_so3(M[:, :3]), M[:, 3]))
    return poses


def write_poses(path, poses) -> None:
    with open(path, "w") as fh:
        for p in poses:
            M = np.hstack([p.rotation, p.translation[:, None]])
            fh.write(" ".join(repr(float(x)) for x in M.ravel()) + "\n")


def load_kitti_calib_tr(path) -> Pose:
    """The velodyne->camera ``Tr`` entry of a KITTI odometry ``calib.txt``."""
    with open(path) as fh:
        for line in fh:
            if line.startswith("Tr:"):
                M = np.array([float(x) for x in line.split()[1:]]).reshape(3, 4)
                return Pose(project_to_so3(M[:, :3]), M[:, 3])
    raise ScanFormatError(f"{path}: no 'Tr:' entry")


def scan_paths(sequence_dir, index: int) -> tuple[str, str]:
    seq = os.fspath(sequence_dir)
    return (
        os.path.join(seq, "velodyne", f"{index:06d}.bin"),
        os.path.join(seq, "labels", f"{index:06d}.label"),
    )
