import csv
import os
import subprocess
import sys

import pytest
import yaml

from fbmcvs import cli

SMALL = {
    "waveform": {"M": 32, "active": 24, "N": 8},
    "experiment": {"bursts": 30, "chunk": 16, "gammas": [0, 1e-3, 0.1], "evm_gammas": [1e-2, 0.1]},
    "ber": {"ebn0_db": [10, 20], "packets": 12, "chunk": 5},
    "papr": {"bursts": 60},
    "psd": {"bursts": 12},
}

OUTPUTS = {
    "design": {"design.csv": ["edge", "rows", "cols", "gamma", "condition_number", "pinv_fallback", "config_hash"]},
    "sweep-gamma": {"sweep_gamma.csv": ["gamma", "xi1_dbc", "xi2_dbc"]},
    "evm": {"evm.csv": ["gamma", *cli.METHOD_COLUMNS]},
    "ber": {"ber.csv": ["scenario", "gamma", "ebn0_db", "errors", "bits", "ber", "ci_low", "ci_high"]},
    "papr": {
        "papr.csv": ["threshold_db", *cli.METHOD_COLUMNS],
        "papr_summary.csv": ["method", "ccdf", "papr_db", "bursts"],
    },
    "psd": {"psd.csv": ["subcarrier", *cli.METHOD_COLUMNS]},
    "roundtrip": {"roundtrip.csv": ["metric", "value"]},
}


@pytest.fixture
def small_yaml(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("command", sorted(OUTPUTS))
def test_subcommand_writes_headers_and_is_deterministic(command, small_yaml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main([command, "--config", small_yaml, "--out", str(a)]) == 0
    assert cli.main([command, "--config", small_yaml, "--out", str(b), "--threads", "3"]) == 0
    for name, header in OUTPUTS[command].items():
        rows = _read(a / name)
        assert rows[0] == header and len(rows) > 1
        assert all(len(r) == len(header) for r in rows)
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_rows_start_untreated(small_yaml, tmp_path):
    cli.main(["sweep-gamma", "--config", small_yaml, "--out", str(tmp_path)])
    rows = _read(tmp_path / "sweep_gamma.csv")
    assert rows[1][0] == "inf"
    assert [float(r[0]) for r in rows[2:]] == [0.0, 1e-3, 0.1]


def test_seed_changes_random_outputs(small_yaml, tmp_path):
    cli.main(["papr", "--config", small_yaml, "--out", str(tmp_path / "a")])
    cli.main(["papr", "--config", small_yaml, "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a" / "papr.csv").read_bytes() != (tmp_path / "b" / "papr.csv").read_bytes()


def test_design_cache_hit_and_invalidation(small_yaml, tmp_path, capsys):
    out = str(tmp_path / "o")
    assert cli.main(["design", "--config", small_yaml, "--out", out]) == 0
    assert "built" in capsys.readouterr().out
    files = sorted(os.listdir(os.path.join(out, "cache")))
    assert len(files) == 2
    assert cli.main(["design", "--config", small_yaml, "--out", out]) == 0
    assert capsys.readouterr().out.count("cache hit") == 2
    raw = yaml.safe_load(open(small_yaml))
    raw["waveform"]["gamma"] = 0.2
    other = tmp_path / "other.yaml"
    other.write_text(yaml.safe_dump(raw))
    assert cli.main(["design", "--config", str(other), "--out", out]) == 0
    assert "built" in capsys.readouterr().out
    assert len(os.listdir(os.path.join(out, "cache"))) == 4


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"waveform": {"M": 31}}))
    assert cli.main(["roundtrip", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert cli.main(["roundtrip", "--config", str(tmp_path / "missing.yaml")]) == 3
    ok = tmp_path / "ok.yaml"
    ok.write_text(yaml.safe_dump(SMALL))
    assert cli.main(["roundtrip", "--config", str(ok), "--out", str(tmp_path), "--threads", "0"]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["roundtrip", "--config", str(ok), "--out", str(blocker / "sub")]) == 3
    capsys.readouterr()


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_console_entry_point(small_yaml, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fbmcvs.cli", "roundtrip", "--config", small_yaml, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    metrics = {r[0]: float(r[1]) for r in _read(tmp_path / "roundtrip.csv")[1:]}
    assert metrics["evm_db"] < -50 and metrics["orthogonality_db"] < -50
