import csv
import json
import math

import numpy as np
import pytest

from opuclab.cli import ARTIFACT_VERSION, build_parser, main, resolve, sha256_file


def _run(*argv):
    return main([str(a) for a in argv])


def _summary(d):
    return json.loads((d / "summary.json").read_text())


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


class TestGen:
    def test_example_invocation(self, tmp_path):
        out = tmp_path / "g"
        code = _run("run", "gen", "--family", "power", "--c", 0.5, "--delta", 1, "--seed", 7, "--n-max", 4096, "--out", out)
        assert code == 0
        rows = list(csv.reader(open(out / "sequence.csv")))
        assert rows[0] == ["n", "re", "im"] and len(rows) == 4097
        spec = json.loads((out / "sequence.json").read_text())
        assert spec["family"] == "power_decay" and spec["seed"] == 7 and spec["n_max"] == 4096
        man = _manifest(out)
        assert man["config"]["c"] == 0.5
        assert man["artifacts"]["sequence.csv"] == sha256_file(out / "sequence.csv")

    def test_csv_line_endings(self, tmp_path):
        _run("run", "gen", "--n-max", 5, "--out", tmp_path)
        raw = (tmp_path / "sequence.csv").read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")


class TestScanCommand:
    def test_free_sequence(self, tmp_path):
        code = _run("run", "scan", "--family", "free", "--n-max", 500, "--grid", 128, "--out", tmp_path)
        assert code == 0
        with open(tmp_path / "scan.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 128
        assert all(abs(float(r["sup_logT"])) <= 1e-12 and r["failed"] == "0" for r in rows)
        s = _summary(tmp_path)
        assert s["kind"] == "scan" and s["fraction_monotone"]
        assert (tmp_path / "dimension_0.csv").read_text().startswith("scale,count\n")

    def test_workers_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OPUC_LAB_WORKERS", "3")
        cfg, _ = resolve("scan", {})
        assert cfg["workers"] == 3
        cfg, _ = resolve("scan", {"workers": 2})
        assert cfg["workers"] == 2


class TestPreconditions:
    def test_three_point_L_grid(self, tmp_path, capsys):
        assert _run("run", "wkb-bench", "--L", 16, 32, 64, "--out", tmp_path) == 64
        assert "at least 4" in capsys.readouterr().err

    def test_schema_violation_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{\n  "seed": 3,\n  "c": 1.5\n}\n')
        assert _run("run", "gen", "--config", cfg, "--out", tmp_path / "o") == 64
        assert f"{cfg}:3:" in capsys.readouterr().err

    def test_unknown_key_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{\n  "seed": 3,\n\n  "colour": 1\n}\n')
        assert _run("run", "gen", "--config", cfg) == 64
        assert f"{cfg}:4:" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{\n  "seed": 3,\n  oops\n}\n')
        assert _run("run", "gen", "--config", cfg) == 64
        assert f"{cfg}:3:" in capsys.readouterr().err

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as exc:
            _run("run", "gen", "--nope")
        assert exc.value.code == 64

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 3, "n_max": 10, "command": "gen"}))
        out = tmp_path / "o"
        assert _run("run", "gen", "--config", cfg, "--seed", 9, "--out", out) == 0
        assert _manifest(out)["config"]["seed"] == 9
        assert _manifest(out)["config"]["n_max"] == 10

    def test_config_for_other_command(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"command": "scan"}))
        assert _run("run", "gen", "--config", cfg) == 64


class TestOtherCommands:
    def test_evolve(self, tmp_path):
        assert _run("run", "evolve", "--n-max", 50, "--eta", 1.0, 2.0, "--beta", 0, math.pi, "--out", tmp_path) == 0
        assert len(list(tmp_path.glob("trajectory_*.csv"))) == 4
        assert len(_summary(tmp_path)["runs"]) == 4

    def test_prufer_check(self, tmp_path):
        assert _run("run", "prufer-check", "--n-max", 300, "--out", tmp_path) == 0
        s = _summary(tmp_path)
        assert s["passed"] and s["max_consistency"] <= 1e-8

    def test_partition_diag(self, tmp_path):
        code = _run("run", "partition-diag", "--family", "random_weighted", "--gamma", 0.6, "--n-max", 2**16, "--out", tmp_path)
        assert code == 0
        s = _summary(tmp_path)
        assert s["dichotomy_ok"] and s["window_tail_ok"]
        header = (tmp_path / "partition.csv").read_text().splitlines()[0]
        assert header.startswith("n,lo,hi,dx,l1,l2")

    def test_wkb_bench(self, tmp_path):
        code = _run("run", "wkb-bench", "--family", "random_weighted", "--gamma", 0.8, "--L", 16, 32, 64, 128, "--out", tmp_path)
        assert code == 0
        s = _summary(tmp_path)
        assert s["dense_rel_gap"] <= 1e-6
        assert (tmp_path / "wkb_0.csv").read_text().startswith("L,lambda_max,ratio,slope_window\n")


class TestReport:
    def test_empty(self, tmp_path):
        assert _run("report", "--out", tmp_path) == 0
        assert (tmp_path / "report.csv").read_text() == "source,kind,gamma,D,slope,max_ratio,box_dimension,passed\n"

    def test_one_scan(self, tmp_path):
        _run("run", "scan", "--family", "free", "--n-max", 100, "--grid", 64, "--out", tmp_path / "s")
        before = sha256_file(tmp_path / "s" / "summary.json")
        assert _run("run", "report", tmp_path / "s", "--out", tmp_path / "r") == 0
        rows = list(csv.DictReader(open(tmp_path / "r" / "report.csv")))
        assert len(rows) == 1 and rows[0]["kind"] == "scan" and rows[0]["passed"] == "1"
        assert sha256_file(tmp_path / "s" / "summary.json") == before

    def test_mixed_versions(self, tmp_path):
        _run("run", "gen", "--n-max", 10, "--out", tmp_path / "a")
        _run("run", "gen", "--n-max", 10, "--out", tmp_path / "b")
        p = tmp_path / "b" / "summary.json"
        data = json.loads(p.read_text())
        data["artifact_version"] = ARTIFACT_VERSION + "x"
        p.write_text(json.dumps(data))
        assert _run("report", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "r") == 65


class TestReplay:
    def test_bit_identical(self, tmp_path):
        out = tmp_path / "s"
        _run("run", "scan", "--family", "random_weighted", "--gamma", 0.5, "--n-max", 2000, "--grid", 256, "--out", out)
        assert _run("replay", out / "manifest.json", "--out", tmp_path / "again") == 0
        assert _manifest(tmp_path / "again")["artifacts"] == _manifest(out)["artifacts"]

    def test_across_worker_counts(self, tmp_path):
        out = tmp_path / "s"
        _run("run", "scan", "--family", "random_weighted", "--n-max", 2000, "--grid", 256, "--workers", 1, "--out", out)
        assert _run("replay", out / "manifest.json", "--out", tmp_path / "w2", "--workers", 2) == 0
        a = np.loadtxt(out / "scan.csv", delimiter=",", skiprows=1)
        b = np.loadtxt(tmp_path / "w2" / "scan.csv", delimiter=",", skiprows=1)
        assert np.max(np.abs(a - b)) <= 1e-13

    def test_manifest_as_config(self, tmp_path):
        out = tmp_path / "g"
        _run("run", "gen", "--n-max", 20, "--seed", 4, "--out", out)
        assert _run("run", "gen", "--config", out / "manifest.json", "--out", tmp_path / "h") == 0
        assert sha256_file(tmp_path / "h" / "sequence.csv") == sha256_file(out / "sequence.csv")

    def test_refuses_to_overwrite_source(self, tmp_path):
        out = tmp_path / "g"
        _run("run", "gen", "--n-max", 20, "--out", out)
        assert _run("replay", out / "manifest.json", "--out", out) == 64

    def test_detects_tampering(self, tmp_path):
        out = tmp_path / "g"
        _run("run", "gen", "--n-max", 20, "--out", out)
        man = _manifest(out)
        man["artifacts"]["sequence.csv"] = "0" * 64
        (out / "manifest.json").write_text(json.dumps(man))
        assert _run("replay", out / "manifest.json", "--out", tmp_path / "r") == 2


def test_parser_lists_commands():
    text = build_parser().format_help()
    assert "run" in text and "report" in text and "replay" in text
