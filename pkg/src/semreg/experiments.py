"""Desk-scale experiment protocols on synthetic scenes.

Each protocol returns plain records so the CLI, the scripts and the tests can
share them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import RegistrationError
from .evaluation import (
    DEFAULT_BUCKETS, LoopPair, deteriorate_labels, generate_bucketed_pairs, is_success, perturb_yaw, rpe, run_suite,
)
from .geometry import Pose, rot_z
from .io import SemanticPointCloud
from .pipeline import register
from .synth import Scene, SceneSpec, generate_scene, inject_outlier_matches, loop_trajectory, scan_from


@dataclass(frozen=True)
class DeskPair:
    src: SemanticPointCloud
    dst: SemanticPointCloud
    gt: Pose  # src frame -> dst frame
    scene: Scene


def desk_pair(seed: int = 0, gap: float = 5.0, noise: float = 0.03, max_range: float = 30.0, spec: SceneSpec | None = None) -> DeskPair:
    """Two scans of one scene taken ``gap`` meters apart with different headings."""
    spec = spec or SceneSpec(seed=seed)
    scene = generate_scene(spec)
    rng = np.random.default_rng(seed + 1000)
    heading = rng.uniform(-np.pi, np.pi)
    direction = rng.uniform(-np.pi, np.pi)
    origin = np.append(rng.uniform(-3, 3, 2), 0.0)
    Ti = Pose(rot_z(heading), origin)
    Tk = Pose(rot_z(heading + rng.uniform(-0.5, 0.5)), origin + gap * np.array([np.cos(direction), np.sin(direction), 0.0]))
    src = scan_from(scene, Ti, max_range, noise, seed=2 * seed + 1)
    dst = scan_from(scene, Tk, max_range, noise, seed=2 * seed + 2)
    return DeskPair(src, dst, Tk.inverse() @ Ti, scene)


def _register_errors(src, dst, gt, cfg, hook=None):
    try:
        res = register(src, dst, cfg, hook)
    except RegistrationError as exc:
        return None, str(exc)
    return res, rpe(res.pose, gt)


def yaw_sweep(pair: DeskPair, step_deg: float = 15.0, outlier_fraction: float = 0.3, cfg: RunConfig | None = None, seed: int = 0):
    """Rotate the source scan about z by each angle in [-180, 180] and register."""
    cfg = cfg or RunConfig()
    rows = []
    for angle in np.arange(-180.0, 180.0 + 1e-9, step_deg):
        src = perturb_yaw(pair.src, angle)
        gt = pair.gt @ Pose(rot_z(-np.radians(angle)), np.zeros(3))
        hook = (lambda c: inject_outlier_matches(c, outlier_fraction, seed)) if outlier_fraction > 0 else None
        res, err = _register_errors(src, pair.dst, gt, cfg, hook)
        if res is None:
            rows.append({"angle": float(angle), "e_trans": np.inf, "e_rot": np.inf, "success": False, "time": 0.0, "error": err})
            continue
        rows.append({"angle": float(angle), "e_trans": err[0], "e_rot": err[1], "success": is_success(*err), "time": res.total_time, "error": ""})
    return rows


def deterioration_study(pair: DeskPair, rates=(0.1, 0.3, 0.5, 0.7, 0.9), repetitions: int = 10, cfg: RunConfig | None = None, seed: int = 0):
    """Mean RPE at each label-deterioration rate (both scans degraded)."""
    cfg = cfg or RunConfig()
    unc = cfg.labels.unclassified_id
    rows = []
    for rate in rates:
        et, er, fails = [], [], 0
        for rep in range(repetitions):
            s = seed + 7919 * rep
            src = deteriorate_labels(pair.src, rate, s, unc)
            dst = deteriorate_labels(pair.dst, rate, s + 1, unc)
            res, err = _register_errors(src, dst, pair.gt, cfg)
            if res is None:
                fails += 1
                continue
            et.append(err[0])
            er.append(err[1])
        rows.append({
            "rate": float(rate),
            "mean_e_trans": float(np.mean(et)) if et else np.inf,
            "mean_e_rot": float(np.mean(er)) if er else np.inf,
            "failures": fails,
            "runs": repetitions,
        })
    return rows


def crossings_spec(seed: int) -> SceneSpec:
    """Many same-label anisotropic clusters: every pair of them yields a crossing."""
    from .io import CAR, POLE, TRUNK

    return SceneSpec(instance_counts={CAR: 10, TRUNK: 10, POLE: 8}, eigenvalue_range=(0.02, 1.0), min_separation=4.5, seed=seed)


def ablation_study(n_pairs: int = 50, cfg: RunConfig | None = None, seed: int = 0):
    """Success rate and mean graph edges under each consistency mode."""
    cfg = cfg or RunConfig()
    out = {}
    for mode in ("l_trim", "g_trim"):
        mcfg = cfg.replace(consistency={"mode": mode})
        succ, edges = 0, []
        for k in range(n_pairs):
            s = seed + k
            pair = desk_pair(s, gap=5.0, spec=crossings_spec(s))
            try:
                res = register(pair.src, pair.dst, mcfg)
            except RegistrationError:
                continue
            edges.append(res.graph_edge_count)
            succ += is_success(*rpe(res.pose, pair.gt))
        out[mode] = {"pairs": n_pairs, "successes": succ, "rate": 100.0 * succ / n_pairs, "mean_edges": float(np.mean(edges)) if edges else 0.0}
    return out


def hardness_pairs(per_bucket: int = 30, seed: int = 0, buckets=DEFAULT_BUCKETS, min_index_gap: int = 50):
    """A looping trajectory through one scene and ``per_bucket`` sampled loop pairs per bucket."""
    scene = generate_scene(SceneSpec(extent=90.0, instance_counts={1: 14, 16: 18, 18: 14}, n_buildings=8, n_fences=8, seed=seed))
    poses = loop_trajectory(n_per_lap=120, radius=20.0, laps=4, lateral=9.0, seed=seed)
    rng = np.random.default_rng(seed)
    chosen: list[LoopPair] = []
    for name, pairs in generate_bucketed_pairs(poses, buckets, min_index_gap).items():
        if len(pairs) > per_bucket:
            pairs = [pairs[k] for k in sorted(rng.choice(len(pairs), per_bucket, replace=False))]
        chosen.extend(pairs)
    return scene, poses, chosen


def hardness_sweep(per_bucket: int = 30, seed: int = 0, cfg: RunConfig | None = None, noise: float = 0.03, max_range: float = 30.0):
    scene, poses, pairs = hardness_pairs(per_bucket, seed)
    scans = lambda i: scan_from(scene, poses[i], max_range, noise, seed=seed * 100003 + i)  # noqa: E731
    return run_suite(pairs, scans, cfg or RunConfig())


__all__ = [
    "DeskPair", "desk_pair", "yaw_sweep", "deterioration_study", "ablation_study", "crossings_spec",
    "hardness_pairs", "hardness_sweep",
]
