import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from interchange_lab import cli
from interchange_lab.parallel import run_blocks
from interchange_lab.paths import CadlagPath
from interchange_lab.rng import StreamKey


def only_run(root: Path, sub: str) -> Path:
    runs = sorted((root / sub).iterdir())
    assert len(runs) == 1
    return runs[0]


def test_simulate_n1_is_constant(tmp_path):
    assert cli.main(["simulate", "--n", "1", "--T", "1", "--seed", "3", "--out", str(tmp_path)]) == 0
    run = only_run(tmp_path, "simulate")
    p = CadlagPath.from_csv(run / "particle_1.csv", 1.0)
    assert p.n_jumps == 0 and p.value_at(1.0) == 1.0
    man = json.loads((run / "manifest.json").read_text())
    assert man["seed"] == 3 and man["subcommand"] == "simulate"
    assert sum(man["event_counts"]["per_edge"]) == man["event_counts"]["total"]
    assert not (run / "verdict.json").exists()


def test_simulate_tracked_particles(tmp_path):
    assert cli.main(["simulate", "--n", "6", "--T", "0.5", "--particles", "2,5", "--out", str(tmp_path)]) == 0
    run = only_run(tmp_path, "simulate")
    assert sorted(p.name for p in run.glob("particle_*.csv")) == ["particle_2.csv", "particle_5.csv"]
    assert cli.main(["simulate", "--n", "6", "--particles", "9", "--out", str(tmp_path / "bad")]) == cli.EXIT_CONFIG


def test_verify_visits_pass(tmp_path):
    code = cli.main(["verify", "visits", "--T", "1,4,16", "--reps", "20000", "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    run = only_run(tmp_path, "verify-visits")
    lines = (run / "visits.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["T", "reps", "mean_visits", "std_error"]
    assert len(lines) == 4
    verdict = json.loads((run / "verdict.json").read_text())
    assert verdict["status"] == "PASS" and verdict["experiment"] == "visits"
    assert all(set(v) >= {"test", "statistic", "bound", "std_error", "pass"} for v in verdict["verdicts"])


def test_invalid_config_exit_code(tmp_path, capsys):
    assert cli.main(["verify", "visits", "--reps", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "reps" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"config": {"n": [4], "unknown": 1}}))
    assert cli.main(["verify", "tightness", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert not (tmp_path / "verify-tightness").exists()


def test_statistical_failure_exit_code(tmp_path):
    # a shifted profile with very few replicates at tiny n cannot meet the hydrodynamic threshold
    code = cli.main(["verify", "hydrodynamic", "--n", "4,8", "--T", "0.001", "--reps", "1", "--profile", '{"type": "atoms", "positions": [0.0]}', "--out", str(tmp_path)])
    assert code == cli.EXIT_FAILED
    verdict = json.loads((only_run(tmp_path, "verify-hydrodynamic") / "verdict.json").read_text())
    assert verdict["status"] == "FAIL"


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"config": {"T": [1.0], "reps": 50}}))
    assert cli.main(["verify", "moments", "--config", str(cfg), "--reps", "60", "--out", str(tmp_path)]) in (0, 3)
    man = json.loads((only_run(tmp_path, "verify-moments") / "manifest.json").read_text())
    assert man["config"]["reps"] == 60 and man["config"]["T"] == [1.0]


def test_manifest_rerun_is_byte_identical(tmp_path):
    args = ["verify", "excursions", "--T", "1,4", "--reps", "300", "--gap", "2", "--seed", "11"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    run_a = only_run(tmp_path / "a", "verify-excursions")
    assert cli.main(["run", "--config", str(run_a / "manifest.json"), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    run_b = only_run(tmp_path / "b", "verify-excursions")
    for f in ("excursions.csv", "s1_s3.csv", "verdict.json", "manifest.json"):
        assert (run_a / f).read_bytes() == (run_b / f).read_bytes()


def test_env_seed_default(tmp_path, monkeypatch):
    monkeypatch.setenv("INTERCHANGE_LAB_SEED", "4242")
    assert cli.main(["verify", "moments", "--T", "1", "--reps", "100", "--out", str(tmp_path)]) in (0, 3)
    assert json.loads((only_run(tmp_path, "verify-moments") / "manifest.json").read_text())["seed"] == 4242


def _verdict_dir(root, name, status):
    d = root / name
    d.mkdir(parents=True)
    (d / "verdict.json").write_text(json.dumps({"experiment": name, "claim": cli.CLAIMS[name], "status": status, "verdicts": []}))
    return d


def test_report_statuses(tmp_path, capsys):
    rep = cli.build_report([])
    assert rep["status"] == "UNTESTED" and all(r["verdict"] == "UNTESTED" for r in rep["table"])
    assert cli.main(["report"]) == 0
    _verdict_dir(tmp_path / "ok", "visits", "PASS")
    _verdict_dir(tmp_path / "ok", "moments", "PASS")
    rep = cli.build_report([tmp_path / "ok"])
    assert rep["status"] == "PASS"
    assert {r["experiment"]: r["verdict"] for r in rep["table"]}["tightness"] == "UNTESTED"
    _verdict_dir(tmp_path / "bad", "tightness", "FAIL")
    out = tmp_path / "summary"
    assert cli.main(["report", str(tmp_path / "ok"), str(tmp_path / "bad"), "--out", str(out)]) == cli.EXIT_FAILED
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "FAIL" and summary["failing"] == [cli.CLAIMS["tightness"]]
    text = (out / "summary.txt").read_text()
    assert "status: FAIL" in text and cli.CLAIMS["tightness"] in text


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "interchange_lab.cli", "simulate", "--n", "3", "--T", "0.1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


def _block_sum(size, key, scale):
    return key.generator().random(size) * scale


def test_run_blocks_independent_of_workers():
    k = StreamKey(9, "blocks")
    a = np.concatenate(run_blocks(_block_sum, k, 1000, 64, 1, (2.0,)))
    b = np.concatenate(run_blocks(_block_sum, k, 1000, 64, 4, (2.0,)))
    assert a.size == 1000 and np.array_equal(a, b)
