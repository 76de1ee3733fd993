"""Acceptance criteria, one test each. A PASS/FAIL line per criterion is
printed in the terminal summary (and immediately, when run with ``-s``)."""

import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, crossings_fixture, gross_outlier_fixture, random_spd
from semreg.clique import brute_force_max_clique, max_clique
from semreg.consistency import ConsistencyGraph, g_trim_consistent, l_trim_consistent, wasserstein_sq
from semreg.config import RunConfig
from semreg.evaluation import generate_loop_pairs, is_success, rpe
from semreg.experiments import ablation_study, deterioration_study, desk_pair, hardness_sweep, yaw_sweep
from semreg.geometry import random_rotation
from semreg.pose import GncConfig, gnc_tls_solve
from semreg.synth import random_walk_trajectory

CFG = RunConfig()


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[str(n)] = line
    print(line)
    assert ok, line


def test_01_wasserstein_kernel():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_neg = worst_sym = worst_self = worst_iso = 0.0
    for _ in range(1000):
        ma, mb = rng.normal(size=3) * 5, rng.normal(size=3) * 5
        A, B = random_spd(rng), random_spd(rng)
        w_ab = wasserstein_sq(ma, A, mb, B)
        worst_neg = min(worst_neg, w_ab)
        worst_sym = max(worst_sym, abs(w_ab - wasserstein_sq(mb, B, ma, A)))
        worst_self = max(worst_self, abs(wasserstein_sq(ma, A, ma, A)))
        s1, s2 = rng.uniform(0.01, 3.0, 2)
        iso = wasserstein_sq(ma, s1**2 * np.eye(3), mb, s2**2 * np.eye(3))
        worst_iso = max(worst_iso, abs(iso - (3 * (s1 - s2) ** 2 + np.sum((ma - mb) ** 2))))
    dt = time.perf_counter() - t0
    ok = worst_neg >= -1e-9 and worst_sym <= 1e-9 and worst_self <= 1e-9 and worst_iso <= 1e-8 and dt < 1.0
    report(1, ok, f"min W2={worst_neg:.2e} asym={worst_sym:.1e} self={worst_self:.1e} iso err={worst_iso:.1e} time={dt:.3f}s")


def test_02_crossings_rejection():
    rng = np.random.default_rng(2)
    th = CFG.consistency.thresholds()
    eps, bound = th.noise_bound, th.g_trim_bound
    (x1, x2) = crossings_fixture()[1]
    g_trim_consistent(x1, x2, bound)  # warm up imports and caches; the check itself is timed
    t0 = time.perf_counter()
    crossed = (l_trim_consistent(x1, x2, eps), g_trim_consistent(x1, x2, bound))
    dt = time.perf_counter() - t0
    inliers_ok = True
    for _ in range(20):
        true_pair, _ = crossings_fixture(random_rotation(rng), rng.normal(size=3) * 20)
        inliers_ok &= l_trim_consistent(*true_pair, eps) and g_trim_consistent(*true_pair, bound)
    ok = crossed == (True, False) and inliers_ok and dt < 1e-3
    report(2, ok, f"crossed l/g={crossed} exact inliers consistent={inliers_ok} time={dt * 1e3:.3f}ms")


def test_03_max_clique_exact():
    rng = np.random.default_rng(3)
    graphs = []
    for _ in range(100):
        n, p = int(rng.integers(1, 21)), rng.uniform(0.1, 0.6)
        U = np.triu(rng.random((n, n)) < p, 1)
        graphs.append(ConsistencyGraph(n, U | U.T, "g_trim"))
    t0 = time.perf_counter()
    sizes = [len(max_clique(g)) for g in graphs]
    dt = time.perf_counter() - t0
    agree = sum(s == len(brute_force_max_clique(g)) for s, g in zip(sizes, graphs))
    report(3, agree == 100 and dt < 10.0, f"{agree}/100 sizes equal brute force, time={dt:.3f}s")


def test_04_gnc_tls_robustness():
    t0 = time.perf_counter()
    good = monotone = 0
    for seed in range(100):
        X, Y, gt = gross_outlier_fixture(seed)
        res = gnc_tls_solve(X, Y, GncConfig(noise_bound=0.2))
        et, er = rpe(res.pose, gt)
        good += et < 1e-6 and er < 1e-6
        monotone += all(after <= before + 1e-9 * max(1.0, abs(before)) for before, after in res.surrogate_steps)
    dt = time.perf_counter() - t0
    report(4, good >= 99 and monotone == 100 and dt < 5.0, f"{good}/100 exact poses, surrogate descent {monotone}/100, time={dt:.3f}s")


@pytest.fixture(scope="module")
def pair():
    return desk_pair(0)


def test_05_yaw_robustness(pair):
    t0 = time.perf_counter()
    rows = yaw_sweep(pair, step_deg=15.0, outlier_fraction=0.3, cfg=CFG, seed=5)
    dt = time.perf_counter() - t0
    ok_angles = sum(r["success"] and r["e_trans"] < 0.5 for r in rows)
    worst = max(r["e_trans"] for r in rows)
    report(5, len(rows) == 25 and ok_angles == 25 and dt < 60.0, f"{ok_angles}/25 angles, max e_trans={worst:.3f}m, time={dt:.1f}s")


def test_06_label_deterioration(pair):
    t0 = time.perf_counter()
    rows = deterioration_study(pair, (0.1, 0.3, 0.5, 0.7, 0.9), repetitions=10, cfg=CFG, seed=6)
    dt = time.perf_counter() - t0
    ok = all(r["mean_e_trans"] < 0.5 and r["mean_e_rot"] < 2.0 for r in rows) and dt < 300.0
    cells = " ".join(f"{100 * r['rate']:.0f}%:{r['mean_e_trans']:.3f}m/{r['mean_e_rot']:.2f}deg" for r in rows)
    report(6, ok, f"{cells} time={dt:.1f}s")


def test_07_ablation_direction():
    out = ablation_study(50, CFG, seed=700)
    l, g = out["l_trim"], out["g_trim"]
    ok = g["rate"] >= l["rate"] and g["mean_edges"] < l["mean_edges"]
    report(7, ok, f"success l/g={l['rate']:.0f}%/{g['rate']:.0f}% mean edges l/g={l['mean_edges']:.1f}/{g['mean_edges']:.1f}")


def _oracle(poses, r1, r2, m):
    T = [p.translation.tolist() for p in poses]
    return {(k, i) for k in range(len(T)) for i in range(k) if k - i >= m and r1 <= math.dist(T[k], T[i]) <= r2}


def test_08_loop_protocol_oracle():
    equal, elapsed = 0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(800 + seed)
        poses = random_walk_trajectory(int(rng.integers(50, 501)), step=1.0, seed=seed)
        r1 = rng.uniform(0.0, 8.0)
        r2 = r1 + rng.uniform(1.0, 8.0)
        m = int(rng.integers(1, 60))
        t0 = time.perf_counter()
        got = {(p.index_k, p.index_i) for p in generate_loop_pairs(poses, r1, r2, m)}
        elapsed += time.perf_counter() - t0
        equal += got == _oracle(poses, r1, r2, m)
    report(8, equal == 20 and elapsed < 5.0, f"{equal}/20 trajectories equal the oracle, time={elapsed:.3f}s")


def test_09_hardness_sweep():
    rows, records = hardness_sweep(30, seed=0, cfg=CFG)
    slowest = max(r.time for r in records)
    by = {r.bucket: r for r in rows}
    ok = all(by[b].pairs == 30 and by[b].rate >= 90.0 for b in ("easy", "medium", "hard")) and slowest < 0.5
    cells = " ".join(f"{b}:{by[b].successes}/{by[b].pairs}" for b in ("easy", "medium", "hard") if b in by)
    report(9, ok, f"{cells} slowest pair={slowest:.3f}s")


KITTI = os.environ.get("SEMREG_KITTI_SEQ05")


@pytest.mark.skipif(not KITTI, reason="set SEMREG_KITTI_SEQ05 to a SemanticKITTI sequence 05 directory")
def test_10_kitti_integration(capsys):
    import json

    from semreg.cli import _kitti_source, main
    from semreg.io import scan_paths, write_poses

    poses, _ = _kitti_source(KITTI, CFG)
    gt_path = os.path.join(os.environ.get("TMPDIR", "/tmp"), "semreg_seq05_gt.txt")
    write_poses(gt_path, [poses[0].inverse() @ poses[10]])
    src_bin, src_lab = scan_paths(KITTI, 10)
    dst_bin, dst_lab = scan_paths(KITTI, 0)
    code = main(["register", src_bin, dst_bin, "--src-labels", src_lab, "--dst-labels", dst_lab, "--gt", gt_path])
    rec = json.loads(capsys.readouterr().out) if code == 0 else {}
    ok = code == 0 and rec["e_trans"] < 2.0 and rec["e_rot"] < 5.0
    report(10, ok, f"exit={code} e_trans={rec.get('e_trans')} e_rot={rec.get('e_rot')}")


def test_10_reported_when_skipped():
    if not KITTI:
        ACCEPTANCE["10"] = "criterion 10: SKIP  optional KITTI integration (SEMREG_KITTI_SEQ05 unset)"
