"""Command-line entry point: ``arxdw {simulate,test,level,power,normality}``.

Model presets fix (p, theta):

    arx1: X[n+1] = 1.5 X[n] + U[n] + eps[n+1]
    arx2: X[n+1] = -X[n] + 2 X[n-1] + U[n] + eps[n+1]
    arx3: X[n+1] = X[n] + 0.5 X[n-1] + 0.25 X[n-2] + U[n] + eps[n+1]

``--nu`` takes the excitation standard deviation; it is squared internally.
Config files are flat ``key = value`` text with ``#`` comments.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import numpy as np

from arxdw.controller import NoiseConfig, run_closed_loop
from arxdw.dwtest import REPORT_FIELDS, run_test
from arxdw.estimator import RlsState, rls_update, theta_hat
from arxdw.model import LoopState, SystemSpec
from arxdw.montecarlo import ExperimentConfig, normality_diagnostics, render_table, run_grid

log = logging.getLogger("arxdw")

PRESETS: dict[str, tuple[float, ...]] = {
    "arx1": (1.5,),
    "arx2": (-1.0, 2.0),
    "arx3": (1.0, 0.5, 0.25),
}
DEFAULT_N_GRID = (50, 100, 200, 500, 1000, 2000)
POWER_RHO_GRID = (0.05, 0.1, 0.2, 0.3, 0.4)

DEFAULTS = {
    "theta": PRESETS["arx1"],
    "sigma2": 1.0,
    "nu": 2.0,
    "rho": (0.0,),
    "n": (500,),
    "replications": 1000,
    "burn_in": 100,
    "alpha": 0.05,
    "statistic": "both",
    "seed": 0,
    "tn2_squared": False,
}
_KEY_ALIASES = {"reps": "replications", "burn-in": "burn_in", "master_seed": "seed", "model": "model"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "theta": _floats,
    "sigma2": float,
    "nu": float,
    "rho": _floats,
    "n": _ints,
    "replications": int,
    "burn_in": int,
    "alpha": float,
    "statistic": str,
    "seed": int,
    "tn2_squared": _bool,
}


def parse_config_text(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key == "model":
            if value not in PRESETS:
                raise ConfigError(key, f"unknown preset {value!r}")
            values["theta"] = PRESETS[value]
            continue
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        if isinstance(values[key], tuple) and not values[key]:
            raise ConfigError(key, "empty list")
    return values


def config_from_values(values: dict) -> ExperimentConfig:
    v = {**DEFAULTS, **values}
    try:
        spec = SystemSpec(v["theta"], rho=v["rho"][0], sigma2=v["sigma2"], nu2=v["nu"] ** 2)
        if not v["nu"] > 0:
            raise ValueError("nu must be positive")
        return ExperimentConfig(
            spec=spec,
            rho_grid=v["rho"],
            n_grid=v["n"],
            replications=v["replications"],
            burn_in=v["burn_in"],
            alpha=v["alpha"],
            statistic=v["statistic"],
            master_seed=v["seed"],
            tn2_squared=v["tn2_squared"],
        )
    except ValueError as exc:
        bad = next((k for k in values if k in str(exc)), "config")
        raise ConfigError(bad, str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a key-value experiment file; missing keys take the protocol defaults."""
    return config_from_values(parse_config_text(Path(path).read_text()))


def dump_config(config: ExperimentConfig) -> str:
    """Canonical key-value text for ``config``; ``load_config`` reads it back."""

    def seq(xs) -> str:
        return ", ".join(repr(x) for x in xs)

    spec = config.spec
    lines = [
        f"theta = {seq(spec.theta)}",
        f"sigma2 = {spec.sigma2!r}",
        f"nu = {float(np.sqrt(spec.nu2))!r}",
        f"rho = {seq(config.rho_grid)}",
        f"n = {seq(config.n_grid)}",
        f"replications = {config.replications}",
        f"burn_in = {config.burn_in}",
        f"alpha = {config.alpha!r}",
        f"statistic = {config.statistic}",
        f"seed = {config.master_seed}",
        f"tn2_squared = {str(config.tn2_squared).lower()}",
    ]
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value experiment file")
    common.add_argument("--model", choices=[*PRESETS, "custom"], help="model preset (default arx1)")
    common.add_argument("--theta", type=_floats, help="coefficients for --model custom, e.g. '0.5,0.2'")
    common.add_argument("--rho", type=_floats, help="serial correlation value(s)")
    common.add_argument("--n", type=_ints, help="evaluation window length(s)")
    common.add_argument("--nu", type=_floats, help="excitation standard deviation(s)")
    common.add_argument("--sigma2", type=float, help="innovation variance (default 1)")
    common.add_argument("--reps", type=int, help="replications per cell (default 1000)")
    common.add_argument("--burn-in", dest="burn_in", type=int, help="learning period (default 100)")
    common.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    common.add_argument("--statistic", choices=["T", "T_simple", "both"])
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", type=Path, help="write output here instead of stdout")
    common.add_argument("--format", choices=["csv", "markdown"], default=None)
    common.add_argument("--tn2-squared", "--paper-literal-tn2", dest="tn2_squared", action="store_true", default=None,
                        help="scale T_simple by n**2 instead of n")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="arxdw", description="Durbin-Watson serial correlation test for excited ARX adaptive tracking.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write one closed-loop trace as CSV")
    t = sub.add_parser("test", parents=[common], help="run the test on one trace and print the report row")
    t.add_argument("--trace", type=Path, help="trace CSV written by 'simulate' (else a fresh run)")
    sub.add_parser("level", parents=[common], help="empirical level table (rho = 0)")
    sub.add_parser("power", parents=[common], help="empirical power table")
    sub.add_parser("normality", parents=[common], help="KS distances of the statistics from their limit laws")
    return parser


def _resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> tuple[list[ExperimentConfig], list[float]]:
    values: dict = {}
    if args.config is not None:
        values.update(parse_config_text(args.config.read_text()))
        config_from_values(values)  # file problems surface as ConfigError (exit 1)
    if args.model == "custom":
        if args.theta is None:
            parser.error("--model custom requires --theta")
        values["theta"] = args.theta
    elif args.model is not None:
        if args.theta is not None:
            parser.error("--theta is only valid with --model custom")
        values["theta"] = PRESETS[args.model]
    elif args.theta is not None:
        values["theta"] = args.theta
    for flag, key in [("rho", "rho"), ("n", "n"), ("sigma2", "sigma2"), ("reps", "replications"),
                      ("burn_in", "burn_in"), ("alpha", "alpha"), ("statistic", "statistic"),
                      ("seed", "seed"), ("tn2_squared", "tn2_squared")]:
        if getattr(args, flag) is not None:
            values[key] = getattr(args, flag)
    if args.command == "level":
        values.setdefault("n", DEFAULT_N_GRID)
    if args.command == "power":
        values.setdefault("rho", POWER_RHO_GRID)
        values.setdefault("n", DEFAULT_N_GRID)
    nus = list(args.nu) if args.nu is not None else [values.get("nu", DEFAULTS["nu"])]
    try:
        configs = [config_from_values({**values, "nu": nu}) for nu in nus]
    except ConfigError as exc:
        parser.error(str(exc))
    return configs, nus


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _read_trace(path: Path) -> tuple[np.ndarray, np.ndarray, int]:
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([float(r["X"]) for r in rows])
    u = np.array([float(r["U"]) for r in rows[:-1]])
    burn_in = sum(int(r["burn_in"]) for r in rows)
    return x, u, burn_in


def _test_row(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    w.writerow(report.csv_row())
    return buf.getvalue()


def _run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    configs, nus = _resolve(args, parser)
    fmt = args.format or "markdown"
    cfg = configs[0]

    if args.command in ("simulate", "test"):
        spec = replace(cfg.spec, rho=cfg.rho_grid[0])
        n = cfg.n_grid[0]
        if args.command == "test" and args.trace is not None:
            x, u, burn_in = _read_trace(args.trace)
            if len(u) - burn_in < 1:
                raise ValueError("trace has no evaluation window")
            # replay identification over the whole trace, burn-in included
            th = _identify(x, u, spec.p)
            report = run_test(x[burn_in:], u[burn_in:], th, spec.nu2, spec.p, cfg.alpha,
                              "T_simple" if cfg.statistic == "T_simple" else "T", cfg.tn2_squared,
                              history=x[:burn_in])
            _emit(_test_row(report), args.out)
            return
        trace, rls = run_closed_loop(spec, NoiseConfig.from_seed(cfg.master_seed), burn_in=cfg.burn_in, n=n)
        if args.command == "simulate":
            _emit(trace.to_csv(), args.out)
            return
        xw, uw = trace.window()
        report = run_test(xw, uw, theta_hat(rls, spec.p), spec.nu2, spec.p, cfg.alpha,
                          "T_simple" if cfg.statistic == "T_simple" else "T", cfg.tn2_squared,
                          history=trace.x_out[: trace.burn_in])
        _emit(_test_row(report), args.out)
        return

    if args.command in ("level", "power"):
        chunks = []
        for nu, c in zip(nus, configs):
            table = run_grid(c, threads=args.threads)
            table.title = f"theta={list(c.spec.theta)}, nu={nu:g}"
            text = render_table(table, fmt)
            if fmt == "csv" and chunks:
                text = text.split("\n", 1)[1]
            if fmt == "csv" and len(nus) > 1:
                # prefix nu when several excitation levels share one CSV
                lines = text.splitlines()
                start = 0 if chunks else 1
                if not chunks:
                    lines[0] = "nu," + lines[0]
                lines[start:] = [f"{nu!r},{ln}" for ln in lines[start:]]
                text = "\n".join(lines) + "\n"
            chunks.append(text)
        _emit(("\n" if fmt == "markdown" else "").join(chunks), args.out)
        return

    if args.command == "normality":
        rows = []
        for nu, c in zip(nus, configs):
            for rho in c.rho_grid:
                for n in c.n_grid:
                    spec = replace(c.spec, rho=rho)
                    d = normality_diagnostics(spec, n, c.replications, c.burn_in, c.master_seed)
                    rows.append({"nu": nu, "rho": rho, "n": n, **d})
        keys = list(rows[0])
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.DictWriter(buf, keys, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
            _emit(buf.getvalue(), args.out)
        else:
            lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
            lines += ["| " + " | ".join(f"{r[k]:.4g}" for k in keys) + " |" for r in rows]
            _emit("\n".join(lines) + "\n", args.out)
        return
    parser.error(f"unknown command {args.command}")


def _identify(x: np.ndarray, u: np.ndarray, p: int) -> np.ndarray:
    """Replay the least squares recursion over a stored trace and return theta_hat."""
    loop = LoopState.initial(p, x0=float(x[0]))
    rls = RlsState.initial(p)
    for k in range(len(u)):
        phi = loop.regressor()
        rls = rls_update(rls, phi, x[k + 1], u[k])
        loop.advance(x[k + 1], u[k], 0.0)
    return theta_hat(rls, p)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _run(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"arxdw: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
