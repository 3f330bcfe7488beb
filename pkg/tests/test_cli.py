import json
import math
import subprocess
import sys

import pytest

from locwalk import cli
from locwalk.cli import ConfigError, main, parse_config, parse_csv, run_experiment


def test_smallball_defaults():
    cfg = parse_config(["--experiment", "smallball", "--n", "100"])
    assert cfg.experiment == "smallball" and cfg.n == 100
    assert cfg.grid == (0.05, 0.1, 0.2, 0.5, 1.0)
    assert cfg.dt == 1e-3


def test_range_error_names_field():
    with pytest.raises(ConfigError, match=r"\bn\b"):
        parse_config(["--experiment", "localize", "--n", "-3"])


def test_flag_overrides_file(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"experiment": "ballwalk", "seed": 7, "n": 16, "D": 8}))
    assert parse_config([], f).seed == 7
    assert parse_config(["--seed", "9"], f).seed == 9
    assert parse_config(["--config", str(f), "--seed", "9"]).seed == 9


def test_delta_default_and_positional_commands():
    cfg = parse_config(["ballwalk", "--n", "16", "--D", "8"])
    assert cfg.delta == pytest.approx(1 / math.sqrt(16))
    assert parse_config(["barrier", "check"]).experiment == "barrier-check"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["--n", "5"],
        ["--experiment", "teleport"],
        ["--experiment", "smallball", "--bogus", "1"],
        ["--experiment", "smallball", "--n", "ten"],
        ["--experiment", "smallball", "--n", "2.5"],
        ["localize", "--particles", "1"],
        ["localize", "--dt", "1", "--T", "0.5"],
        ["localize", "--mode", "exact_gaussian", "--base", "cube"],
        ["ballwalk", "--n", "16", "--D", "20"],
        ["cone-lb", "--grid", "10,16"],
        ["smallball", "--grid", "0,0.5"],
    ],
)
def test_invalid_configs(argv):
    with pytest.raises(ConfigError):
        parse_config(argv)


def test_unknown_file_key(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"experiment": "smallball", "colour": "red"}))
    with pytest.raises(ConfigError, match="colour"):
        parse_config([], f)


def test_exit_codes(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["barrier", "check", "--output-path", str(out)]) == 0
    assert out.read_text().startswith("test,instance_id,metric,value,threshold,pass\n")
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["passed"] and summary["seed"] == 0
    assert main(["localize", "--particles", "1"]) == 2
    assert "particles" in capsys.readouterr().err


def test_failed_assertion_exits_one(tmp_path, monkeypatch):
    def failing(cfg, rows, summary):
        rows.append({"n": cfg.n})
        return False

    monkeypatch.setitem(cli.RUNNERS, "cone-lb", failing)
    out = tmp_path / "f.csv"
    assert main(["cone-lb", "--output-path", str(out)]) == 1
    assert json.loads(out.with_suffix(".json").read_text())["passed"] is False


def test_module_error_is_censored():
    cfg = parse_config(["localize", "--n", "2", "--T", "1", "--dt", "1", "--particles", "2", "--runs", "1", "--phi", "1e-300"])
    report = run_experiment(cfg)
    assert report.censored and not report.passed and "localize" in report.error


@pytest.mark.parametrize(
    "argv",
    [
        ["barrier", "check"],
        ["ballwalk", "--n", "16", "--D", "8", "--chains", "4"],
        ["localize", "--T", "0.02", "--runs", "3", "--particles", "300"],
        ["localize", "--T", "0.05", "--runs", "2", "--particles", "300", "--base", "cube", "--mode", "mcmc_refresh"],
        ["cone-lb"],
        ["profile"],
        ["concentration", "--particles", "20000"],
        ["smallball", "--particles", "50000", "--n", "25"],
    ],
    ids=lambda a: " ".join(a[:2]),
)
def test_byte_identical_reruns_and_round_trip(argv, tmp_path, monkeypatch):
    texts = []
    for threads, name in (("1", "a.csv"), ("4", "b.csv")):
        monkeypatch.setenv("LOCWALK_THREADS", threads)
        out = tmp_path / name
        assert main(argv + ["--output-path", str(out)]) in (0, 1)
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]
    text = texts[0].decode()
    rows = parse_csv(text)
    header = text.splitlines()[0].split(",")
    for raw, row in zip(text.splitlines()[1:], rows):
        back = ",".join("" if row[c] is None else _fmt(row[c]) for c in header)
        assert back == raw


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def test_module_entry_point(tmp_path):
    out = tmp_path / "c.csv"
    res = subprocess.run([sys.executable, "-m", "locwalk", "cone-lb", "--output-path", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert out.read_text().splitlines()[0] == "n,D,t0,log_p,p,kappa_upper,rho_upper,kappa_sqrt_D"


def test_help_lists_schemas(capsys):
    assert main(["--help"]) == 0
    assert "proper_steps" in capsys.readouterr().out
