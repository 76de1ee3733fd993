import json

import numpy as np
import pytest

from semreg.cli import EXIT_CLIQUE, EXIT_IO, EXIT_NO_CORR, EXIT_OK, EXIT_USAGE, main
from semreg.config import flat_defaults
from semreg.io import LabelConfig, SemanticPointCloud, write_labels, write_scan


@pytest.fixture(scope="module")
def pair_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pair")
    assert main(["synth", str(out), "--seed", "2"]) == EXIT_OK
    return out


def _register(pair_dir, *extra):
    return ["register", str(pair_dir / "src.bin"), str(pair_dir / "dst.bin"),
            "--src-labels", str(pair_dir / "src.label"), "--dst-labels", str(pair_dir / "dst.label"), *extra]


def test_help_lists_every_key(capsys):
    assert main(["register", "--help"]) == EXIT_OK
    text = capsys.readouterr().out
    for key, _ in flat_defaults():
        assert f"--{key}" in text


def test_register_success_and_deterministic(pair_dir, capsys):
    assert main(_register(pair_dir, "--gt", str(pair_dir / "gt.txt"))) == EXIT_OK
    first = capsys.readouterr().out
    rec = json.loads(first)
    assert rec["success"] and rec["e_trans"] < 0.5
    assert rec["label_source"]["src"].endswith("src.label")
    assert main(_register(pair_dir, "--gt", str(pair_dir / "gt.txt"))) == EXIT_OK
    assert capsys.readouterr().out == first


def test_modes_differ_in_edges(pair_dir, capsys):
    main(_register(pair_dir, "--mode", "l_trim"))
    l = json.loads(capsys.readouterr().out)
    main(_register(pair_dir, "--consistency.mode=g_trim"))
    g = json.loads(capsys.readouterr().out)
    assert l["mode"] == "l_trim" and g["mode"] == "g_trim"
    assert g["graph_edge_count"] <= l["graph_edge_count"]


def test_missing_label_file(pair_dir, capsys):
    code = main(["register", str(pair_dir / "src.bin"), str(pair_dir / "dst.bin"), "--src-labels", str(pair_dir / "missing.label")])
    assert code == EXIT_IO
    assert "missing.label" in capsys.readouterr().err


def test_truncated_scan(pair_dir, tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes((pair_dir / "src.bin").read_bytes()[:-3])
    assert main(["register", str(bad), str(pair_dir / "dst.bin")]) == EXIT_IO
    assert "truncated" in capsys.readouterr().err


def test_usage_errors(pair_dir, capsys):
    assert main(_register(pair_dir, "--clique.workers=zero")) == EXIT_USAGE
    assert main(_register(pair_dir, "--bogus.key=1")) == EXIT_USAGE
    assert main(["nosuchcommand"]) == EXIT_USAGE


def test_no_correspondences(tmp_path, capsys):
    cloud = SemanticPointCloud(np.random.default_rng(0).uniform(-1, 1, (5, 3)), np.zeros(5, dtype=int))
    write_scan(tmp_path / "a.bin", cloud)
    assert main(["register", str(tmp_path / "a.bin"), str(tmp_path / "a.bin")]) == EXIT_NO_CORR
    assert "no correspondences" in capsys.readouterr().err


def test_clique_too_small(tmp_path, capsys):
    # two car blobs and nothing else: at most two mutually consistent matches
    rng = np.random.default_rng(0)
    pts = np.concatenate([rng.normal([0, 0, 1], 0.3, (80, 3)), rng.normal([10, 0, 1], 0.3, (80, 3))])
    cloud = SemanticPointCloud(pts, np.full(160, 1))
    write_scan(tmp_path / "a.bin", cloud)
    write_labels(tmp_path / "a.label", cloud, LabelConfig())
    args = ["register", str(tmp_path / "a.bin"), str(tmp_path / "a.bin"), "--src-labels", str(tmp_path / "a.label"),
            "--dst-labels", str(tmp_path / "a.label")]
    assert main(args) == EXIT_CLIQUE
    assert "clique" in capsys.readouterr().err


def test_yaw_sweep_from_files(pair_dir, capsys):
    args = ["yaw-sweep", "--src", str(pair_dir / "src.bin"), "--dst", str(pair_dir / "dst.bin"),
            "--src-labels", str(pair_dir / "src.label"), "--dst-labels", str(pair_dir / "dst.label"),
            "--gt", str(pair_dir / "gt.txt"), "--step", "90"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "angle\te_trans\te_rot\tsuccess" and len(lines) == 6
    assert all(l.endswith("\t1") for l in lines[1:])


def test_yaw_sweep_requires_gt(pair_dir):
    assert main(["yaw-sweep", "--src", str(pair_dir / "src.bin")]) == EXIT_USAGE


def test_eval_loops_on_sequence(tmp_path, capsys):
    # a tiny KITTI-style sequence: the same scan at two poses, one frame missing
    from semreg.experiments import desk_pair
    from semreg.io import write_poses
    from semreg.geometry import Pose

    pair = desk_pair(1)
    seq = tmp_path / "seq"
    (seq / "velodyne").mkdir(parents=True)
    (seq / "labels").mkdir()
    poses = [Pose.identity()] * 3 + [pair.gt.inverse()]
    for i in (0, 3):
        cloud = pair.src if i == 0 else pair.dst
        write_scan(seq / "velodyne" / f"{i:06d}.bin", cloud)
        write_labels(seq / "labels" / f"{i:06d}.label", cloud, LabelConfig())
    write_poses(seq / "poses.txt", poses)
    code = main(["eval-loops", "--sequence", str(seq), "--evaluation.min_index_gap=1",
                 "--evaluation.buckets={near: [0.0, 1.0], loop: [3.0, 8.0]}"])
    out = capsys.readouterr()
    assert code == EXIT_OK, out.err
    assert "loop\t1\t1\t100.0" in out.out
    assert "# skipped" in out.out  # pairs touching frames 1 and 2 have no scans
