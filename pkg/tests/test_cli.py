import json
import re
import subprocess
import sys

import pytest

from birdify import datasets
from birdify.cli import COMMANDS, main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One noiseless sequence pushed through every stage."""
    out = tmp_path_factory.mktemp("runs")
    common = ["--out-dir", out, "--k", 12, "--len", 12, "--sigma-h", 0, "--seed", 5]
    for cmd in ("simulate", "observe", "birdify", "evaluate", "plot"):
        extra = ["--posterior-frame", 6] if cmd == "birdify" else []
        assert run(cmd, *common, *extra) == 0
    return out, common


def snapshot(seq):
    return {p.name: p.read_bytes() for p in sorted(seq.iterdir()) if p.is_file()}


class TestSimulate:
    def test_deterministic(self, tmp_path):
        for d in ("a", "b"):
            assert run("simulate", "--k", 20, "--seed", 7, "--out-dir", tmp_path / d) == 0
        a = (tmp_path / "a/seq_000/trajectories.csv").read_bytes()
        assert a == (tmp_path / "b/seq_000/trajectories.csv").read_bytes()

    def test_row_count(self, tmp_path):
        assert run("simulate", "--k", 50, "--len", 20, "--out-dir", tmp_path) == 0
        trajs = datasets.load_trajectories(tmp_path / "seq_000/trajectories.csv")
        assert len(trajs) == 50 and all(len(fr) == 20 for fr in trajs.values())

    def test_zero_k_rejected(self, tmp_path, capsys):
        assert run("simulate", "--k", 0, "--out-dir", tmp_path) != 0
        assert "k must be a positive integer" in capsys.readouterr().err
        assert not (tmp_path / "seq_000").exists()

    def test_several_sequences(self, tmp_path):
        assert run("simulate", "--k", 3, "--len", 5, "--sequences", 2, "--out-dir", tmp_path) == 0
        a, b = (tmp_path / f"seq_00{i}/trajectories.csv" for i in (0, 1))
        assert a.read_bytes() != b.read_bytes()


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"k": 5, "colour": "red"}))
        assert run("simulate", "--config", tmp_path / "c.json", "--out-dir", tmp_path) == 2
        assert "colour" in capsys.readouterr().err

    def test_flag_beats_file_beats_default(self, tmp_path):
        (tmp_path / "c.yaml").write_text("k: 4\nlen: 6\n")
        assert run("simulate", "--config", tmp_path / "c.yaml", "--k", 3, "--out-dir", tmp_path) == 0
        trajs = datasets.load_trajectories(tmp_path / "seq_000/trajectories.csv")
        assert len(trajs) == 3 and all(len(fr) == 6 for fr in trajs.values())

    def test_bad_choice_from_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"model": "magic"}))
        assert run("simulate", "--config", tmp_path / "c.json", "--out-dir", tmp_path) == 2

    @pytest.mark.parametrize("cmd", sorted(COMMANDS))
    def test_help(self, cmd):
        res = subprocess.run([sys.executable, "-m", "birdify.cli", cmd, "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        for flag in ("--config", "--seed", "--k", "--len", "--sigma-h", "--model", "--projection",
                     "--epsilon", "--out-dir", "--jobs"):
            assert flag in res.stdout


class TestPipeline:
    def test_files_written(self, pipeline):
        seq = pipeline[0] / "seq_000"
        for name in ("trajectories.csv", "observations.jsonl", "bootstrap.json", "camera_gt.csv",
                     "est_camera.csv", "est_pedestrians.csv", "diagnostics.jsonl", "posterior_6.csv",
                     "overlay.svg", "posterior_6.svg"):
            assert (seq / name).exists(), name
        assert (pipeline[0] / "metrics.txt").exists()

    def test_noiseless_accuracy_reported(self, pipeline):
        text = (pipeline[0] / "metrics.txt").read_text()
        row = next(line for line in text.splitlines() if line.startswith("seq_000"))
        dr, dt, dx_rel, dx = (float(v) for v in re.findall(r"([\d.]+) ±", row))
        assert dx < 0.05 and dt < 0.05

    def test_diagnostics_name_model(self, pipeline):
        lines = (pipeline[0] / "seq_000/diagnostics.jsonl").read_text().splitlines()
        recs = [json.loads(line) for line in lines]
        assert recs and all(r["model"] == "socialforce" for r in recs)

    def test_rerun_bit_identical(self, pipeline):
        out, common = pipeline
        seq = out / "seq_000"
        before = snapshot(seq)
        for cmd in ("simulate", "observe", "birdify", "plot"):
            extra = ["--posterior-frame", 6] if cmd == "birdify" else []
            assert run(cmd, *common, *extra) == 0
        assert snapshot(seq) == before

    def test_overlay_polylines(self, pipeline):
        seq = pipeline[0] / "seq_000"
        svg = (seq / "overlay.svg").read_text()
        est = datasets.load_trajectories(seq / "est_pedestrians.csv")
        gt = datasets.load_trajectories(seq / "trajectories.csv")
        est_ids = re.findall(r'<g id="(est-[^"]+)"', svg)
        gt_ids = re.findall(r'<g id="(gt-[^"]+)"', svg)
        assert len(est_ids) == len(est) + 1 and "est-camera" in est_ids
        assert len(gt_ids) == (len(gt) - 1) + 1 and "gt-camera" in gt_ids

    def test_constvel_model(self, pipeline, tmp_path):
        out, common = pipeline
        for name in ("trajectories.csv", "observations.jsonl", "bootstrap.json", "camera_gt.csv"):
            (tmp_path / "seq_000").mkdir(exist_ok=True)
            (tmp_path / "seq_000" / name).write_bytes((out / "seq_000" / name).read_bytes())
        assert run("birdify", "--out-dir", tmp_path, "--model", "constvel", "--sigma-h", 0) == 0
        recs = [json.loads(line) for line in (tmp_path / "seq_000/diagnostics.jsonl").read_text().splitlines()]
        assert {r["model"] for r in recs} == {"constvel"}

    def test_missing_bootstrap_names_track(self, pipeline, tmp_path, capsys):
        out, _ = pipeline
        seq = tmp_path / "seq_000"
        seq.mkdir()
        (seq / "observations.jsonl").write_bytes((out / "seq_000/observations.jsonl").read_bytes())
        boot = json.loads((out / "seq_000/bootstrap.json").read_text())
        victim = sorted(boot["pedestrians"], key=int)[0]
        del boot["pedestrians"][victim]
        (seq / "bootstrap.json").write_text(json.dumps(boot))
        assert run("birdify", "--out-dir", tmp_path) == 1
        assert f"track {victim}" in capsys.readouterr().err

    def test_missing_inputs(self, tmp_path):
        assert run("observe", "--out-dir", tmp_path) != 0
        assert run("birdify", "--out-dir", tmp_path) != 0
        assert run("evaluate", "--out-dir", tmp_path) != 0


class TestPlot:
    def test_empty_trajectory(self, tmp_path):
        seq = tmp_path / "seq_000"
        seq.mkdir()
        (seq / "trajectories.csv").write_text("frame,id,x,y\n")
        assert run("plot", "--out-dir", tmp_path) == 0
        svg = (seq / "overlay.svg").read_text()
        assert "<svg" in svg and not re.findall(r'<g id="(est|gt)-', svg)

    def test_byte_identical(self, pipeline, tmp_path):
        seq = pipeline[0] / "seq_000"
        first = (seq / "overlay.svg").read_bytes()
        assert run("plot", "--out-dir", pipeline[0]) == 0
        assert (seq / "overlay.svg").read_bytes() == first
