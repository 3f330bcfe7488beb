"""Experiment runner: ``python3 -m locwalk <experiment> --key value ...``.

Flags override values from a JSON ``--config`` file. Results go to a CSV (stdout
when no ``--output-path`` is given) and a JSON summary next to it. Exit codes:
0 when every hard assertion passes, 1 on a failed assertion or module error,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .ballwalk import cone_mixing_experiment, check_cone_range
from .barrier import barrier_check_suite
from .bodies import Cube, Gaussian, Halfspace, ProductExponential, Slab, UniformOnBody, axis
from .isoperimetry import (
    DEFAULT_INTERVALS,
    concentration_experiment,
    cone_slab_profile,
    gaussian_interval_profile,
    small_ball_experiment,
    threshold_for_mass,
)
from .localization import Mode, SDEParams, run_localization
from .rng import ordered_map, stream

EXPERIMENTS = ("localize", "barrier-check", "ballwalk", "cone-lb", "profile", "concentration", "smallball")

SCHEMAS = {
    "localize": "run_id, step, t, opnorm_A, u, psi, ess, g_<set> (one column per tracked set)",
    "barrier-check": "test, instance_id, metric, value, threshold, pass",
    "ballwalk": "chain_id, n, D, delta, proper_steps, total_steps, censored",
    "cone-lb": "n, D, t0, log_p, p, kappa_upper, rho_upper, kappa_sqrt_D",
    "profile": "a, b, y, t, g, boundary, kappa, psi",
    "concentration": "t, tail_median, tail_mean, bound_median, bound_mean, censored",
    "smallball": "n, eps, p_exact, bound, bound_k2, holds, p_mc, mc_stderr, mc_resolvable, agree",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int | None = None
    D: float | None = None
    delta: float | None = None
    dt: float = 1e-3
    T: float | None = None
    particles: int | None = None
    chains: int = 32
    runs: int | None = None
    seed: int = 0
    ess_floor: float = 0.5
    q: int = 2
    phi: float | None = None
    base: str | None = None
    mode: str = "reweight"
    grid: tuple[float, ...] | None = None
    cap: int | None = None
    output_path: str | None = None


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if value is None:
        return None
    try:
        if "tuple" in kind:
            items = value.split(",") if isinstance(value, str) else list(value)
            return tuple(float(v) for v in items)
        if kind.startswith("int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            if isinstance(value, str):
                return int(float(value)) if float(value).is_integer() else int(value)
            return int(value)
        if kind.startswith("float"):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if isinstance(value, str):
            return value
        raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None


def _need(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _with_defaults(cfg: ExperimentConfig) -> ExperimentConfig:
    e = cfg.experiment
    d: dict[str, Any] = {}
    if e == "localize":
        d = dict(n=8, T=0.5, particles=2000, runs=4, base="gaussian")
    elif e == "barrier-check":
        d = dict(n=5, runs=20)
    elif e == "ballwalk":
        d = dict(n=25, D=10.0)
    elif e == "cone-lb":
        d = dict(n=64, grid=(16.0, 24.0, 32.0))
    elif e == "profile":
        d = dict(T=1.0, grid=tuple(float(x) for x in np.geomspace(1e-6, 0.5, 10)))
    elif e == "concentration":
        d = dict(n=100, particles=200_000, base="product_exponential", grid=tuple(np.arange(0.0, 8.5, 0.5).tolist()))
    elif e == "smallball":
        d = dict(n=100, particles=1_000_000, grid=(0.05, 0.1, 0.2, 0.5, 1.0))
    cfg = replace(cfg, **{k: v for k, v in d.items() if getattr(cfg, k) is None})
    if cfg.n is not None and cfg.delta is None and e in ("ballwalk",):
        cfg = replace(cfg, delta=1.0 / math.sqrt(cfg.n))
    if e == "localize" and cfg.phi is None:
        cfg = replace(cfg, phi=4.0 * cfg.n)
    return cfg


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _need(cfg.experiment in EXPERIMENTS, f"experiment must be one of {', '.join(EXPERIMENTS)}; got {cfg.experiment!r}")
    cfg = _with_defaults(cfg)
    e = cfg.experiment
    if cfg.n is not None:
        _need(cfg.n >= 2, f"n must be an integer >= 2, got {cfg.n}")
    _need(cfg.seed >= 0, f"seed must be nonnegative, got {cfg.seed}")
    _need(cfg.dt > 0, f"dt must be positive, got {cfg.dt}")
    if cfg.T is not None:
        _need(cfg.T >= 0, f"T must be nonnegative, got {cfg.T}")
    if cfg.delta is not None:
        _need(cfg.delta > 0, f"delta must be positive, got {cfg.delta}")
    if cfg.particles is not None:
        _need(cfg.particles >= 2, f"particles must be >= 2, got {cfg.particles}")
    if cfg.runs is not None:
        _need(cfg.runs >= 1, f"runs must be >= 1, got {cfg.runs}")
    _need(cfg.chains >= 1, f"chains must be >= 1, got {cfg.chains}")
    _need(0 < cfg.ess_floor <= 1, f"ess_floor must lie in (0, 1], got {cfg.ess_floor}")
    _need(cfg.q >= 1, f"q must be an integer >= 1, got {cfg.q}")
    if cfg.phi is not None:
        _need(cfg.phi > 0, f"phi must be positive, got {cfg.phi}")
    if cfg.cap is not None:
        _need(cfg.cap >= 1, f"cap must be >= 1, got {cfg.cap}")
    if e == "localize":
        _need(cfg.T > 0 and cfg.dt <= cfg.T, f"localize needs 0 < dt <= T, got dt={cfg.dt}, T={cfg.T}")
        _need(cfg.base in ("gaussian", "cube", "product_exponential"), f"base must be gaussian, cube or product_exponential, got {cfg.base!r}")
        _need(cfg.mode in {m.value for m in Mode}, f"mode must be one of {[m.value for m in Mode]}, got {cfg.mode!r}")
        if cfg.mode == "exact_gaussian":
            _need(cfg.base == "gaussian", "exact_gaussian mode needs the gaussian base")
    if e == "ballwalk":
        _need(cfg.D is not None, "ballwalk needs D")
        try:
            check_cone_range(cfg.n, cfg.D)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if e == "cone-lb":
        for D in cfg.grid:
            _need(2 * math.sqrt(cfg.n) <= D <= cfg.n / 2, f"cone-lb grid needs 2*sqrt(n) <= D <= n/2, got D={D}")
    if e == "profile":
        _need(cfg.T > 0, f"profile needs t = T > 0, got {cfg.T}")
        _need(all(0 < g <= 0.5 for g in cfg.grid), "profile grid holds masses in (0, 1/2]")
    if e == "concentration":
        _need(cfg.base in ("gaussian", "product_exponential"), f"concentration base must have an exact sampler, got {cfg.base!r}")
        _need(all(t >= 0 for t in cfg.grid), "concentration grid must be nonnegative")
    if e == "smallball":
        _need(all(0 < x <= 1 for x in cfg.grid), "smallball grid holds eps values in (0, 1]")
    return cfg


def _arg_parser() -> argparse.ArgumentParser:
    epilog = "CSV columns per experiment:\n" + "\n".join(f"  {k}: {v}" for k, v in SCHEMAS.items())
    epilog += "\n\nLOCWALK_THREADS caps the number of worker threads."
    p = argparse.ArgumentParser(
        prog="locwalk",
        description="Ball walk, stochastic localization and barrier experiments.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
    )
    p.add_argument("command", nargs="*", help="experiment name, e.g. 'ballwalk' or 'barrier check'")
    p.add_argument("--config", help="JSON file with config keys")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        names = [flag] if f.name.replace("_", "-") == f.name else [flag, "--" + f.name]
        p.add_argument(*names, dest=f.name, default=None, help=argparse.SUPPRESS if f.name == "experiment" else None)
    return p


def parse_config(argv: Sequence[str], file: str | Path | None = None) -> ExperimentConfig:
    """Build a validated config from ``argv`` flags layered over an optional JSON file."""

    class _Parser(type(_arg_parser())):
        def error(self, message):
            raise ConfigError(message)

    p = _arg_parser()
    p.__class__ = _Parser
    ns = p.parse_args(list(argv))
    raw: dict[str, Any] = {}
    path = file if file is not None else ns.config
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        _need(isinstance(data, dict), "config file must hold a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            _need(key in _FIELD_TYPES, f"unknown config key {k!r}")
            raw[key] = v
    for k in _FIELD_TYPES:
        v = getattr(ns, k)
        if v is not None:
            raw[k] = v
    if ns.command:
        cmd = "-".join(ns.command)
        _need("experiment" not in raw or raw["experiment"] == cmd, "experiment given twice with different values")
        raw["experiment"] = cmd
    _need("experiment" in raw, "missing experiment (positional name or --experiment)")
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in raw.items()})
    return validate(cfg)


# ------------------------------------------------------------------------ reports


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    columns: list[str]
    rows: list[dict[str, Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    passed: bool = True
    wall_clock: float = 0.0
    censored: bool = False
    error: str | None = None

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_value(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def summary_json(self) -> str:
        doc = {
            "version": __version__,
            "seed": self.config.seed,
            "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.config).items()},
            "summary": self.summary,
            "passed": self.passed,
            "censored": self.censored,
            "error": self.error,
            "wall_clock_s": self.wall_clock,
        }
        return json.dumps(doc, indent=2, default=_json_default)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_csv(text: str) -> list[dict[str, Any]]:
    """Re-parse a report CSV; numbers and booleans come back typed."""

    def conv(s: str):
        if s == "":
            return None
        if s in ("true", "false"):
            return s == "true"
        for typ in (int, float):
            try:
                return typ(s)
            except ValueError:
                pass
        return s

    return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# ----------------------------------------------------------------------- runners


def _base_density(kind: str, n: int):
    if kind == "gaussian":
        return Gaussian(n)
    if kind == "product_exponential":
        return ProductExponential(n)
    # unit-variance cube
    return UniformOnBody(Cube(n, math.sqrt(12.0)))


def _run_localize(cfg, rows, summary) -> bool:
    base = _base_density(cfg.base, cfg.n)
    sets = [Halfspace(axis(cfg.n, 0), 0.0, "h0"), Slab(axis(cfg.n, 1), -0.5, 0.5, "slab")]
    params = SDEParams(dt=cfg.dt, T=cfg.T, m=cfg.particles, ess_floor=cfg.ess_floor)

    def one(r):
        return run_localization(base, params, sets, stream(cfg.seed, r), mode=cfg.mode, barrier=(cfg.q, cfg.phi))

    ok = True
    for r, run in enumerate(ordered_map(one, range(cfg.runs))):
        for row in run.rows(r):
            ok &= all(0.0 <= row[f"g_{s.label}"] <= 1.0 for s in sets) and row["ess"] <= cfg.particles * (1 + 1e-12)
            rows.append(row)
    summary["max_opnorm_A"] = max(r["opnorm_A"] for r in rows)
    summary["sets"] = [s.to_spec() for s in sets]
    return ok


def _run_barrier(cfg, rows, summary) -> bool:
    for t, iid, metric, value, thr, ok in barrier_check_suite(cfg.seed, instances=cfg.runs, n=cfg.n):
        rows.append(dict(test=t, instance_id=iid, metric=metric, value=value, threshold=thr, **{"pass": bool(ok)}))
    failed = [r for r in rows if not r["pass"]]
    summary["checks"] = len(rows)
    summary["failed"] = len(failed)
    return not failed


def _run_ballwalk(cfg, rows, summary) -> bool:
    out = cone_mixing_experiment(cfg.n, cfg.D, cfg.delta, cfg.chains, cfg.seed, cfg.cap)
    rows.extend(asdict(r) for r in out)
    steps = np.array([r.proper_steps for r in out])
    summary["median_proper_steps"] = float(np.median(steps))
    summary["censored_chains"] = sum(r.censored for r in out)
    return True


def _run_cone_lb(cfg, rows, summary) -> bool:
    for D in cfg.grid:
        c = cone_slab_profile(cfg.n, D)
        rows.append(
            dict(n=cfg.n, D=float(D), t0=c.t0, log_p=c.log_p, p=c.p, kappa_upper=c.kappa_upper,
                 rho_upper=c.rho_upper, kappa_sqrt_D=c.kappa_upper * math.sqrt(D))
        )
    vals = [r["kappa_sqrt_D"] for r in rows]
    summary["band_ratio"] = max(vals) / min(vals)
    summary["slab_mass_reference"] = "untruncated cone"
    return summary["band_ratio"] <= 3.0


def _run_profile(cfg, rows, summary) -> bool:
    t = cfg.T
    for a, b in DEFAULT_INTERVALS:
        for g in cfg.grid:
            y = threshold_for_mass(a, b, g, t)
            p = gaussian_interval_profile(a, b, y, t)
            rows.append(dict(a=a, b=b, y=y, t=t, g=p.g, boundary=p.boundary, kappa=p.kappa, psi=p.psi))
    summary["min_kappa"] = min(r["kappa"] for r in rows)
    # kappa scales as sqrt(t), so the unit-variance floor 0.3 becomes 0.3 sqrt(t)
    return summary["min_kappa"] >= 0.3 * math.sqrt(t)


def _run_concentration(cfg, rows, summary) -> bool:
    tab = concentration_experiment(_base_density(cfg.base, cfg.n), "euclidean_norm", cfg.grid, cfg.particles, stream(cfg.seed))
    rows.extend(tab.rows())
    summary.update(c_median=tab.c_median, c_mean=tab.c_mean, median=tab.median, mean=tab.mean)
    return bool(np.all(np.diff(tab.tail_median) <= 0) and np.all(np.diff(tab.tail_mean) <= 0))


def _run_smallball(cfg, rows, summary) -> bool:
    exact = small_ball_experiment(cfg.n, cfg.grid)
    mc = small_ball_experiment(cfg.n, cfg.grid, mode="monte_carlo", m=cfg.particles, rng=stream(cfg.seed))
    ok = True
    for e, m in zip(exact, mc):
        agree = None
        if m.resolvable:
            sigma = math.sqrt(e.prob * (1 - e.prob) / cfg.particles)
            agree = abs(m.prob - e.prob) <= 4 * sigma
            ok &= agree
        if e.eps <= 0.2:
            ok &= e.holds
        rows.append(
            dict(n=cfg.n, eps=e.eps, p_exact=e.prob, bound=e.bound, bound_k2=e.bound_k2, holds=e.holds,
                 p_mc=m.prob if m.resolvable else "< resolution", mc_stderr=m.stderr, mc_resolvable=m.resolvable, agree=agree)
        )
    return ok


RUNNERS: dict[str, Callable] = {
    "localize": _run_localize,
    "barrier-check": _run_barrier,
    "ballwalk": _run_ballwalk,
    "cone-lb": _run_cone_lb,
    "profile": _run_profile,
    "concentration": _run_concentration,
    "smallball": _run_smallball,
}


def _columns(cfg: ExperimentConfig) -> list[str]:
    if cfg.experiment == "localize":
        return ["run_id", "step", "t", "opnorm_A", "u", "psi", "ess", "g_h0", "g_slab"]
    return [c.strip() for c in SCHEMAS[cfg.experiment].split(",")]


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Dispatch, collect rows and summary; a module error yields a censored partial report."""
    report = ExperimentReport(config, _columns(config), [])
    start = time.perf_counter()
    try:
        report.passed = bool(RUNNERS[config.experiment](config, report.rows, report.summary))
    except (ValueError, ArithmeticError) as exc:
        report.passed = False
        report.censored = True
        report.error = f"{config.experiment}: {type(exc).__name__}: {exc}"
    report.wall_clock = time.perf_counter() - start
    return report


def write_report(report: ExperimentReport, out=None):
    text = report.csv_text()
    path = report.config.output_path
    if path is None:
        (out or sys.stdout).write(text)
        sys.stderr.write(report.summary_json() + "\n")
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    p.with_suffix(".json").write_text(report.summary_json() + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        _arg_parser().print_help()
        return 0 if argv else 2
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    report = run_experiment(cfg)
    write_report(report)
    if report.error:
        sys.stderr.write(report.error + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
