"""Error metrics, loop-pair generation and batch evaluation."""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .config import RunConfig
from .errors import RegistrationError
from .geometry import Pose, rot_z, rotation_angle_deg
from .io import UNLABELED, SemanticPointCloud
from .pipeline import RegistrationResult, register

log = logging.getLogger(__name__)

SUCCESS_TRANS = 2.0  # meters
SUCCESS_ROT = 5.0  # degrees
DEFAULT_BUCKETS = {"easy": (3.0, 5.0), "medium": (8.0, 10.0), "hard": (10.0, 15.0)}
TABLE_COLUMNS = ("bucket", "pairs", "successes", "rate", "mean_e_trans", "mean_e_rot", "mean_time", "aic")


@dataclass(frozen=True)
class LoopPair:
    index_k: int  # destination scan
    index_i: int  # source scan, i < k
    gt_relative_pose: Pose  # maps frame i into frame k
    translation_gap: float
    hardness: str = ""


def rpe(estimate: Pose, ground_truth: Pose) -> tuple[float, float]:
    """Translation (m) and rotation (deg) error of ``estimate @ ground_truth^-1``."""
    delta = estimate @ ground_truth.inverse()
    return float(np.linalg.norm(delta.translation)), rotation_angle_deg(delta.rotation)


def is_success(e_trans: float, e_rot: float) -> bool:
    return e_trans < SUCCESS_TRANS and e_rot < SUCCESS_ROT


def generate_loop_pairs(poses: Sequence[Pose], r1: float, r2: float, m: int, hardness: str = "") -> list[LoopPair]:
    """All (k, i) with i < k, ``k - i >= m`` and ``r1 <= |t_k - t_i| <= r2``."""
    if not r1 < r2:
        raise ValueError("r1 must be smaller than r2")
    if m < 1:
        raise ValueError("m must be >= 1")
    n = len(poses)
    if n == 0:
        return []
    T = np.array([p.translation for p in poses])
    out = []
    for k in range(m, n):
        i = np.arange(0, k - m + 1)
        gap = np.linalg.norm(T[:k - m + 1] - T[k], axis=1)
        for ii in i[(gap >= r1) & (gap <= r2)]:
            out.append(LoopPair(k, int(ii), poses[k].inverse() @ poses[ii], float(gap[ii]), hardness))
    return out


def generate_bucketed_pairs(poses: Sequence[Pose], buckets: Mapping[str, tuple[float, float]] = DEFAULT_BUCKETS, m: int = 50) -> dict[str, list[LoopPair]]:
    """Loop pairs per hardness bucket; a gap on a shared edge goes to the lower bucket."""
    ordered = sorted(buckets.items(), key=lambda kv: kv[1])
    seen: set[tuple[int, int]] = set()
    out: dict[str, list[LoopPair]] = {}
    for name, (r1, r2) in ordered:
        pairs = [p for p in generate_loop_pairs(poses, r1, r2, m, name) if (p.index_k, p.index_i) not in seen]
        seen.update((p.index_k, p.index_i) for p in pairs)
        out[name] = pairs
    return out


def perturb_yaw(cloud: SemanticPointCloud, angle_deg: float) -> SemanticPointCloud:
    """Rotate every point about the sensor z axis."""
    return cloud.with_points(cloud.points @ rot_z(np.radians(angle_deg)).T)


def deteriorate_labels(cloud: SemanticPointCloud, rate: float, seed: int = 0, unclassified_id: int = UNLABELED) -> SemanticPointCloud:
    """Set exactly ``floor(rate * n)`` randomly chosen labels to ``unclassified_id``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    n = len(cloud)
    k = math.floor(rate * n + 1e-9)
    if k == 0:
        return cloud
    idx = np.random.default_rng(seed).choice(n, size=k, replace=False)
    labels = cloud.labels.copy()
    labels[idx] = unclassified_id
    return cloud.with_labels(labels)


@dataclass(frozen=True)
class PairRecord:
    bucket: str
    index_k: int
    index_i: int
    e_trans: float
    e_rot: float
    success: bool
    time: float
    inlier_count: int
    graph_edge_count: int
    error: str = ""


@dataclass(frozen=True)
class BucketRow:
    bucket: str
    pairs: int
    successes: int
    rate: float
    mean_e_trans: float
    mean_e_rot: float
    mean_time: float
    aic: float
    skipped: int = 0

    def tsv(self) -> str:
        return "\t".join([
            self.bucket, str(self.pairs), str(self.successes), f"{self.rate:.1f}",
            f"{self.mean_e_trans:.4f}", f"{self.mean_e_rot:.4f}", f"{self.mean_time:.4f}", f"{self.aic:.1f}",
        ])


def _mean(xs) -> float:
    xs = list(xs)
    return float(np.mean(xs)) if xs else float("nan")


def summarize(records: Iterable[PairRecord], skipped: Mapping[str, int] | None = None, order: Sequence[str] = tuple(DEFAULT_BUCKETS)) -> list[BucketRow]:
    """Per-bucket table. Registration failures count as unsuccessful pairs.

    AIC is the mean consistency-graph edge count over successful pairs.
    Buckets named in ``order`` come first, in that order.
    """
    skipped = dict(skipped or {})
    by: dict[str, list[PairRecord]] = {}
    for r in records:
        by.setdefault(r.bucket, []).append(r)
    rows = []
    rank = {name: k for k, name in enumerate(order)}
    for name in sorted(set(by) | set(skipped), key=lambda b: (rank.get(b, len(rank)), b)):
        rs = sorted(by.get(name, []), key=lambda r: (r.index_k, r.index_i))
        ok = [r for r in rs if r.success]
        rows.append(BucketRow(
            bucket=name,
            pairs=len(rs),
            successes=len(ok),
            rate=round(100.0 * len(ok) / len(rs), 1) if rs else 0.0,
            mean_e_trans=_mean(r.e_trans for r in rs if not r.error),
            mean_e_rot=_mean(r.e_rot for r in rs if not r.error),
            mean_time=_mean(r.time for r in rs if not r.error),
            aic=_mean(r.graph_edge_count for r in ok),
            skipped=skipped.get(name, 0),
        ))
    return rows


def format_table(rows: Sequence[BucketRow]) -> str:
    lines = ["\t".join(TABLE_COLUMNS)] + [r.tsv() for r in rows]
    skipped = [f"{r.bucket}={r.skipped}" for r in rows if r.skipped]
    if skipped:
        lines.append("# skipped\t" + " ".join(skipped))
    return "\n".join(lines)


ScanSource = Callable[[int], SemanticPointCloud]


def evaluate_pair(pair: LoopPair, src: SemanticPointCloud, dst: SemanticPointCloud, cfg: RunConfig, register_fn=register, **kw) -> PairRecord:
    try:
        res: RegistrationResult = register_fn(src, dst, cfg, **kw)
    except RegistrationError as exc:
        log.info("pair (%d, %d) failed: %s", pair.index_k, pair.index_i, exc)
        return PairRecord(pair.hardness, pair.index_k, pair.index_i, float("inf"), float("inf"), False, 0.0, 0, 0, str(exc))
    et, er = rpe(res.pose, pair.gt_relative_pose)
    return PairRecord(pair.hardness, pair.index_k, pair.index_i, et, er, is_success(et, er), res.total_time, res.inlier_count, res.graph_edge_count)


def run_suite(pairs: Sequence[LoopPair], scans: ScanSource, cfg: RunConfig | None = None, register_fn=register, order: Sequence[str] | None = None) -> tuple[list[BucketRow], list[PairRecord]]:
    """Register every pair; scans that cannot be loaded are skipped and counted."""
    cfg = cfg or RunConfig()
    records: list[PairRecord] = []
    skipped: dict[str, int] = {}
    fetch = functools.lru_cache(maxsize=64)(scans)

    for pair in pairs:
        try:
            src, dst = fetch(pair.index_i), fetch(pair.index_k)
        except (OSError, ValueError) as exc:
            log.warning("skipping pair (%d, %d): %s", pair.index_k, pair.index_i, exc)
            skipped[pair.hardness] = skipped.get(pair.hardness, 0) + 1
            continue
        records.append(evaluate_pair(pair, src, dst, cfg, register_fn))
    records.sort(key=lambda r: (r.bucket, r.index_k, r.index_i))
    order = tuple(order) if order is not None else tuple(cfg.evaluation.buckets)
    return summarize(records, skipped, order), records
