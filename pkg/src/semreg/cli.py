"""Command-line entry point: ``semreg <command> [options] [--section.key=value ...]``.

Exit codes: 0 success, 1 unexpected error, 2 usage or config error, 3 I/O
error, 4 no correspondences, 5 clique too small, 6 degenerate pose.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import evaluation, experiments
from .config import RunConfig, flat_defaults, load_config
from .errors import CliqueTooSmallError, DegenerateSolutionError, NoCorrespondencesError, RegistrationError, ScanFormatError
from .geometry import Pose
from .io import load_kitti_calib_tr, load_labels, load_poses, load_scan, scan_paths, write_labels, write_poses, write_scan
from .pipeline import register

log = logging.getLogger("semreg")

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_IO, EXIT_NO_CORR, EXIT_CLIQUE, EXIT_DEGENERATE = 0, 1, 2, 3, 4, 5, 6
_CFG_PREFIX = "cfg:"


class UsageError(Exception):
    pass


def _fmt_default(v) -> str:
    if isinstance(v, dict) and len(v) > 6:
        return f"{{...{len(v)} entries}}"
    return json.dumps(v) if not isinstance(v, str) else v


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file (sections as in --help)")
    g = p.add_argument_group("config keys (override as --section.key=value)")
    for key, default in flat_defaults():
        g.add_argument(f"--{key}", dest=_CFG_PREFIX + key, default=argparse.SUPPRESS, metavar="V",
                       help=f"default: {_fmt_default(default)}")


def _config(args) -> RunConfig:
    overrides = [f"{k[len(_CFG_PREFIX):]}={v}" for k, v in vars(args).items() if k.startswith(_CFG_PREFIX)]
    if getattr(args, "mode", None):
        overrides.append(f"consistency.mode={args.mode}")
    try:
        return load_config(args.config, overrides)
    except OSError:
        raise
    except (ValueError, TypeError) as exc:
        raise UsageError(f"config: {exc}") from exc


def _load_cloud(scan_path, label_path, cfg: RunConfig):
    cloud = load_scan(scan_path, cfg.labels.unclassified_id)
    if label_path:
        cloud = load_labels(label_path, cloud, cfg.labels)
    return cloud


def _load_pose(path) -> Pose:
    poses = load_poses(path)
    if len(poses) != 1:
        raise ScanFormatError(f"{path}: expected exactly one pose, found {len(poses)}")
    return poses[0]


def _errors_json(pose: Pose, gt: Pose | None) -> dict:
    if gt is None:
        return {}
    et, er = evaluation.rpe(pose, gt)
    return {"e_trans": round(et, 9), "e_rot": round(er, 9), "success": evaluation.is_success(et, er)}


def cmd_register(args) -> int:
    cfg = _config(args)
    src = _load_cloud(args.src, args.src_labels, cfg)
    dst = _load_cloud(args.dst, args.dst_labels, cfg)
    gt = _load_pose(args.gt) if args.gt else None
    res = register(src, dst, cfg)
    log.info("timings %s", json.dumps({k: round(v, 4) for k, v in res.timings.items()}))
    record = res.record(timings=args.timings)
    record.update(_errors_json(res.pose, gt))
    record["label_source"] = {"src": args.src_labels, "dst": args.dst_labels}
    print(json.dumps(record, separators=(",", ":")))
    return EXIT_OK


def _pair_from_args(args, cfg: RunConfig):
    """Either files (``--src`` etc. plus ``--gt``) or a synthetic pair."""
    if args.src:
        if not (args.dst and args.gt):
            raise UsageError("--src requires --dst and --gt")
        src = _load_cloud(args.src, args.src_labels, cfg)
        dst = _load_cloud(args.dst, args.dst_labels, cfg)
        return src, dst, _load_pose(args.gt)
    pair = experiments.desk_pair(args.seed, gap=args.gap, noise=args.noise)
    return pair.src, pair.dst, pair.gt


def cmd_yaw_sweep(args) -> int:
    cfg = _config(args)
    src, dst, gt = _pair_from_args(args, cfg)
    step = args.step if args.step is not None else cfg.evaluation.yaw_step_deg
    pair = experiments.DeskPair(src, dst, gt, None)
    rows = experiments.yaw_sweep(pair, step, args.outliers, cfg, args.seed)
    print("angle\te_trans\te_rot\tsuccess")
    for r in rows:
        print(f"{r['angle']:.1f}\t{r['e_trans']:.6f}\t{r['e_rot']:.6f}\t{int(r['success'])}")
    return EXIT_OK


def cmd_deteriorate(args) -> int:
    cfg = _config(args)
    src, dst, gt = _pair_from_args(args, cfg)
    rates = cfg.evaluation.deteriorate_rates
    reps = args.repetitions or cfg.evaluation.repetitions
    rows = experiments.deterioration_study(experiments.DeskPair(src, dst, gt, None), rates, reps, cfg, cfg.evaluation.seed)
    print("rate\tmean_e_trans\tmean_e_rot\tfailures\truns")
    for r in rows:
        print(f"{100 * r['rate']:.0f}\t{r['mean_e_trans']:.6f}\t{r['mean_e_rot']:.6f}\t{r['failures']}\t{r['runs']}")
    return EXIT_OK


def _kitti_source(seq_dir: str, cfg: RunConfig):
    calib = os.path.join(seq_dir, "calib.txt")
    poses = load_poses(os.path.join(seq_dir, "poses.txt"))
    if os.path.exists(calib):
        tr = load_kitti_calib_tr(calib)
        # camera-frame ground truth to lidar frame
        poses = [tr.inverse() @ p @ tr for p in poses]

    def scans(i: int):
        bin_path, label_path = scan_paths(seq_dir, i)
        return _load_cloud(bin_path, label_path if os.path.exists(label_path) else None, cfg)

    return poses, scans


def cmd_eval_loops(args) -> int:
    cfg = _config(args)
    ev = cfg.evaluation
    if args.sequence:
        poses, scans = _kitti_source(args.sequence, cfg)
        buckets = evaluation.generate_bucketed_pairs(poses, ev.buckets, ev.min_index_gap)
        pairs = [p for name in ev.buckets for p in buckets[name][: args.max_pairs or None]]
        rows, records = evaluation.run_suite(pairs, scans, cfg)
    else:
        rows, records = experiments.hardness_sweep(args.max_pairs or 30, args.seed, cfg)
    print(evaluation.format_table(rows))
    if args.records:
        with open(args.records, "w") as fh:
            fh.write("bucket\tindex_k\tindex_i\te_trans\te_rot\tsuccess\ttime\tinliers\tedges\terror\n")
            for r in records:
                fh.write(f"{r.bucket}\t{r.index_k}\t{r.index_i}\t{r.e_trans:.6f}\t{r.e_rot:.6f}\t{int(r.success)}\t"
                         f"{r.time:.4f}\t{r.inlier_count}\t{r.graph_edge_count}\t{r.error}\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    pair = experiments.desk_pair(args.seed, gap=args.gap, noise=args.noise)
    os.makedirs(args.out, exist_ok=True)
    for name, cloud in (("src", pair.src), ("dst", pair.dst)):
        write_scan(os.path.join(args.out, f"{name}.bin"), cloud)
        write_labels(os.path.join(args.out, f"{name}.label"), cloud, cfg.labels)
    write_poses(os.path.join(args.out, "gt.txt"), [pair.gt])
    print(json.dumps({"out": args.out, "src_points": len(pair.src), "dst_points": len(pair.dst)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semreg", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register two labeled scans")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--src-labels")
    p.add_argument("--dst-labels")
    p.add_argument("--gt", help="pose file with the src->dst ground truth (adds RPE fields)")
    p.add_argument("--mode", choices=["l_trim", "g_trim"])
    p.add_argument("--timings", action="store_true", help="include stage timings in the record")
    _add_config_options(p)
    p.set_defaults(func=cmd_register)

    def pair_options(p):
        p.add_argument("--src")
        p.add_argument("--dst")
        p.add_argument("--src-labels")
        p.add_argument("--dst-labels")
        p.add_argument("--gt")
        p.add_argument("--seed", type=int, default=0, help="synthetic pair seed when no files are given")
        p.add_argument("--gap", type=float, default=5.0)
        p.add_argument("--noise", type=float, default=0.03)
        p.add_argument("--mode", choices=["l_trim", "g_trim"])

    p = sub.add_parser("yaw-sweep", help="registration under yaw perturbation of the source")
    pair_options(p)
    p.add_argument("--step", type=float, help="angle step in degrees (default evaluation.yaw_step_deg)")
    p.add_argument("--outliers", type=float, default=0.0, help="fraction of injected outlier matches")
    _add_config_options(p)
    p.set_defaults(func=cmd_yaw_sweep)

    p = sub.add_parser("deteriorate", help="registration with labels randomly set to unclassified")
    pair_options(p)
    p.add_argument("--repetitions", type=int)
    _add_config_options(p)
    p.set_defaults(func=cmd_deteriorate)

    p = sub.add_parser("eval-loops", help="loop-pair success table (KITTI sequence or synthetic)")
    p.add_argument("--sequence", help="KITTI sequence dir with velodyne/, labels/, poses.txt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-pairs", type=int, default=0, help="pairs per bucket (0 = all, synthetic default 30)")
    p.add_argument("--records", help="write per-pair records here")
    p.add_argument("--mode", choices=["l_trim", "g_trim"])
    _add_config_options(p)
    p.set_defaults(func=cmd_eval_loops)

    p = sub.add_parser("synth", help="write a synthetic labeled scan pair with ground truth")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.03)
    _add_config_options(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ScanFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NoCorrespondencesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CORR
    except CliqueTooSmallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CLIQUE
    except DegenerateSolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except RegistrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
