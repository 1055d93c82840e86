"""Command line interface: subcommands, exit codes, manifests, file formats."""

import csv
import json
from pathlib import Path

import pytest

from qsblab.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _construct(workdir, name="inst.json", dims=("2", "2", "2", "2")):
    ds, da, db, dc = dims
    code = main(
        ["construct", "--ds", ds, "--da", da, "--db", db, "--dc", dc, "-o", name]
    )
    assert code == 0
    return workdir / name


def test_construct_success(workdir, capsys):
    path = _construct(workdir)
    out = capsys.readouterr().out
    assert "f_ab 1.000000" in out
    assert "f_ac 1.000000" in out
    assert path.exists()
    manifest = json.loads((workdir / "inst.manifest.json").read_text())
    assert manifest["subcommand"] == "construct"
    assert manifest["seed"] == 42
    assert manifest["outputs"] == ["inst.json"]


def test_construct_impossible_dims(workdir, capsys):
    code = main(["construct", "--ds", "3", "--da", "2", "--db", "2", "--dc", "2", "-o", "x.json"])
    assert code == 2
    assert "impossible" in capsys.readouterr().err


def test_construct_missing_flag(workdir, capsys):
    code = main(["construct", "--ds", "2", "--da", "2", "--db", "2", "-o", "x.json"])
    assert code == 1


def test_verify_reports_deficit(workdir, capsys):
    path = _construct(workdir)
    capsys.readouterr()
    code = main(["verify", str(path), "--samples", "20"])
    assert code == 0
    out = capsys.readouterr().out
    eps_line = next(l for l in out.splitlines() if l.startswith("eps_hat "))
    assert float(eps_line.split()[1]) <= 1e-12  # perfect instance
    assert "states 30" in out  # 2 basis + 8 phased pairs + 20 haar
    assert (workdir / "verify.manifest.json").exists()


def test_verify_unreadable_and_malformed(workdir, capsys):
    assert main(["verify", "missing.json"]) == 3
    bad = workdir / "bad.json"
    bad.write_text("{not json")
    assert main(["verify", str(bad)]) == 3
    truncated = workdir / "trunc.json"
    truncated.write_text(json.dumps({"in": [["S", 2]]}))
    assert main(["verify", str(truncated)]) == 3


def test_verify_invariant_breaking_instance(workdir, capsys):
    path = _construct(workdir)
    data = json.loads(path.read_text())
    # halve one Kraus entry: parses fine, fails completeness on reconstruction
    data["kraus"][0][0][0] = [0.5, 0.0]
    broken = workdir / "broken.json"
    broken.write_text(json.dumps(data))
    assert main(["verify", str(broken)]) == 4
    assert "invariant" in capsys.readouterr().err


def test_verify_chain_gating(workdir, capsys):
    path = _construct(workdir)
    capsys.readouterr()
    # the chain's premise needs d_S > d_A; refuse rather than report nonsense
    assert main(["verify", str(path), "--chain"]) == 2
    assert "impossible" in capsys.readouterr().err

    code = main(
        ["verify", str(path), "--chain", "--allow-trivial", "-o", "chain.json"]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "all_satisfied True" in out
    report = json.loads((workdir / "chain.json").read_text())
    assert report["all_satisfied"] is True
    assert report["checks"]


def test_threshold_exact_arithmetic(workdir, capsys):
    for d in (1, 2, 10, 10**21):
        assert main(["threshold", "--da", str(d)]) == 0
        out = capsys.readouterr().out
        expected = min(0.6e-175, 2.4e-14 / float(d) ** 8)
        assert f"eps_zero {expected!r}" in out
    assert (workdir / "threshold.manifest.json").exists()


def test_threshold_rejects_non_integer(workdir, capsys):
    assert main(["threshold", "--da", "two"]) == 1


def test_properties_subcommand(workdir, capsys):
    code = main(["properties", "--samples", "50", "--dims", "6"])
    assert code == 0
    assert "properties ok" in capsys.readouterr().out
    assert (workdir / "properties.manifest.json").exists()


def test_optimize_writes_frontier(workdir, capsys):
    code = main(
        [
            "optimize",
            "--ds", "2", "--da", "2", "--db", "1", "--dc", "1",
            "--restarts", "2", "--iters", "50", "--haar", "10",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "best 1.000000" in out
    assert "wrote frontier.json" in out
    data = json.loads((workdir / "frontier.json").read_text())
    assert data["dims"] == [2, 2, 1, 1]
    assert "best_instance" in data
    manifest = json.loads((workdir / "frontier.manifest.json").read_text())
    assert manifest["subcommand"] == "optimize"


def test_optimize_impossible_dims(workdir, capsys):
    code = main(
        [
            "optimize",
            "--ds", "2", "--da", "1", "--db", "1", "--dc", "1",
            "--restarts", "1", "--iters", "10", "--haar", "5",
        ]
    )
    assert code == 4  # no representation isometry exists at these dims


def test_sweep_csv_and_monotonicity(workdir, capsys):
    code = main(
        [
            "sweep",
            "--ds", "2", "--da", "1..2", "--db", "2", "--dc", "2",
            "--restarts", "2", "--iters", "100", "--haar", "10", "--seed", "5",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "d_a 1: best" in out and "d_a 2: best 1.000000" in out
    with open("sweep.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["d_s", "d_a", "d_b", "d_c", "best_fidelity", "restarts", "seed"]
    assert len(rows) == 3
    vals = [float(r[4]) for r in rows[1:]]
    assert vals[1] >= vals[0] - 1e-9
    assert (workdir / "sweep.manifest.json").exists()


def test_sweep_bad_ranges(workdir, capsys):
    base = ["sweep", "--ds", "2", "--db", "2", "--dc", "2"]
    assert main(base + ["--da", "5..2"]) == 1
    assert main(base + ["--da", "0..2"]) == 1


def test_version_flag(workdir, capsys):
    assert main(["--version"]) == 0
    assert "qsblab" in capsys.readouterr().out


def test_no_subcommand_is_usage_error(workdir, capsys):
    assert main([]) == 1
