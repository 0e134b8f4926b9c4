"""Command-line interface: solve, sweep, match, simulate, verify and figure data.

Output is CSV (header row, ``#`` metadata lines, data rows, 12 significant
digits) or JSON lines with the same columns. Exit codes: 0 success, 2 invalid
input, 3 infeasible constraint, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import closed_form as cf
from .equilibrium import (
    InfeasibleConstraintError,
    Regime,
    RootFindingError,
    classify_regime,
    match_constraint,
    solve_threshold,
)
from .model import ModelParams, ParameterError, characteristic_roots, validate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4

MODEL_KEYS = {"mu": "mu", "sigma": "sigma", "delta": "delta", "beta": "beta", "lmax": "lmax",
              "lambda": "lam", "alpha": "alpha"}
SIM_KEYS = ("x0", "t0", "dt", "horizon", "paths", "seed")
CLI_SIM_DEFAULTS = {"x0": 1.0, "t0": 0.0, "dt": 1e-2, "horizon": None, "paths": 10_000, "seed": 0}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: ModelParams | None
    sim: dict = field(default_factory=dict)
    out: str | None = None
    fmt: str = "csv"
    verbosity: int = 0
    options: dict = field(default_factory=dict)


# ---------------------------------------------------------------- formatting

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{float(value):.12g}"
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if not math.isfinite(value) else float(f"{float(value):.12g}")
    return value


def render(columns: Sequence[str], rows: Sequence[Sequence], meta: dict | None, fmt: str) -> str:
    lines = []
    if fmt == "csv":
        lines.append(",".join(columns))
        for key, value in (meta or {}).items():
            lines.append(f"# {key}={_fmt(value)}")
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    else:
        lines.extend(json.dumps({c: _json_value(v) for c, v in zip(columns, row)}) for row in rows)
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------- parsing

def read_config_file(path: str) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _number(name: str, text, integer: bool = False):
    try:
        value = int(text) if integer else float(text)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be a {'integer' if integer else 'number'}, got {text!r}") from None
    return value


def _add_model_flags(p: argparse.ArgumentParser, with_lambda: bool = True) -> None:
    g = p.add_argument_group("model")
    for key in ("mu", "sigma", "delta", "beta", "lmax"):
        g.add_argument(f"--{key}", default=None)
    if with_lambda:
        g.add_argument("--lambda", dest="lambda_", default=None)
    g.add_argument("--alpha", default=None)


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    for key in SIM_KEYS:
        g.add_argument(f"--{key}", default=None)
    g.add_argument("--antithetic", action="store_true")
    g.add_argument("--no-bridge", dest="no_bridge", action="store_true",
                   help="disable the Brownian-bridge zero-crossing test")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equidiv", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value parameter file; flags override it")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="equilibrium threshold for fixed lambda")
    _add_model_flags(p)

    p = sub.add_parser("sweep", parents=[common], help="b* over a beta or lambda range")
    _add_model_flags(p)
    p.add_argument("--param", choices=("beta", "lambda"), required=True)
    p.add_argument("--from", dest="start", required=True)
    p.add_argument("--to", dest="stop", required=True)
    p.add_argument("--steps", default="21")
    p.add_argument("--spacing", choices=("lin", "log"), default="lin")

    p = sub.add_parser("match", parents=[common], help="match (b*, lambda*) to a ruin constraint")
    _add_model_flags(p, with_lambda=False)
    p.add_argument("--x0", default=None)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimates against closed forms")
    _add_model_flags(p)
    _add_sim_flags(p)
    p.add_argument("--ruin-rate", dest="ruin_rate", default="0",
                   help="constant payout rate for the ruin-probability row")
    p.add_argument("--strict", action="store_true", help="exit 4 if any comparison fails")

    p = sub.add_parser("verify", parents=[common], help="HJB residual, smooth fit and shape checks")
    _add_model_flags(p)
    p.add_argument("--tol", default="1e-8")

    p = sub.add_parser("figure", parents=[common], help="dataset behind a threshold plot")
    p.add_argument("--id", dest="fig_id", required=True)
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flag_values = {}
    for key in list(MODEL_KEYS) + list(SIM_KEYS):
        attr = "lambda_" if key == "lambda" else key
        value = getattr(args, attr, None)
        if value is not None:
            flag_values[key] = value
    merged = {**file_values, **flag_values}

    params = None
    if args.command != "figure":
        missing = [k for k in ("mu", "sigma", "delta", "beta", "lmax") if k not in merged]
        if args.command in ("solve", "simulate", "verify") and "lambda" not in merged:
            missing.append("lambda")
        if missing:
            raise UsageError("missing required parameter(s): " + ", ".join("--" + m for m in missing))
        kwargs = {MODEL_KEYS[k]: _number(k, merged[k]) for k in MODEL_KEYS if k in merged}
        if args.command == "match":
            kwargs.pop("lam", None)
            if "alpha" not in kwargs:
                raise UsageError("missing required parameter(s): --alpha")
        params = validate(ModelParams(**kwargs))

    sim = {}
    for key in SIM_KEYS:
        if key in merged:
            sim[key] = _number(key, merged[key], integer=key in ("paths", "seed"))
    return RunConfig(args.command, params, sim, args.out, args.format, args.verbose, vars(args))


# ---------------------------------------------------------------- commands

def cmd_solve(cfg: RunConfig):
    p = cfg.params
    r = characteristic_roots(p)
    info = classify_regime(p, r)
    sol = solve_threshold(p, r)
    cols = ["b_star", "regime", "b_bar", "Lambda", "residual"]
    return cols, [(sol.b_star, sol.regime.value, info.b_bar, info.Lambda, sol.residual)], p.as_dict()


def cmd_sweep(cfg: RunConfig):
    o = cfg.options
    start, stop = _number("--from", o["start"]), _number("--to", o["stop"])
    steps = _number("--steps", o["steps"], integer=True)
    if steps < 2 or not start < stop:
        raise UsageError("sweep needs --from < --to and --steps >= 2")
    if o["spacing"] == "log":
        if o["param"] == "lambda":
            if not stop < 0:
                raise UsageError("log spacing of lambda needs --to < 0")
            values = -np.geomspace(-start, -stop, steps)
        else:
            if not start > 0:
                raise UsageError("log spacing of beta needs --from > 0")
            values = np.geomspace(start, stop, steps)
    else:
        values = np.linspace(start, stop, steps)
    field_name = "beta" if o["param"] == "beta" else "lam"
    rows = []
    for v in values:
        p = validate(cfg.params.with_(**{field_name: float(v)}))
        sol = solve_threshold(p)
        rows.append((o["param"], float(v), sol.b_star, sol.regime.value))
    base = cfg.params
    meta = {k: v for k, v in base.as_dict().items() if k != field_name}
    meta["b_bar"] = cf.classical_threshold(base, characteristic_roots(base))
    return ["param", "value", "b_star", "regime"], rows, meta


def cmd_match(cfg: RunConfig):
    if "x0" not in cfg.sim:
        raise UsageError("missing required parameter(s): --x0")
    x0 = cfg.sim["x0"]
    m = match_constraint(x0, cfg.params)
    cols = ["x0", "x_bar", "b_star", "lambda_star", "w", "slack", "binding"]
    return cols, [(m.x0, m.x_bar, m.b_star, m.lambda_star, m.w, m.slack, m.binding)], cfg.params.as_dict()


def cmd_simulate(cfg: RunConfig):
    from . import montecarlo as mc

    p = cfg.params
    r = characteristic_roots(p)
    sim = {**CLI_SIM_DEFAULTS, **cfg.sim}
    sim_cfg = mc.SimConfig(x0=sim["x0"], t0=sim["t0"], dt=sim["dt"], horizon=sim["horizon"], paths=sim["paths"],
                           seed=sim["seed"], antithetic=cfg.options["antithetic"],
                           bridge=not cfg.options["no_bridge"])
    x0 = sim_cfg.x0
    sol = solve_threshold(p, r)
    law = mc.threshold_law(sol.b_star, p.lmax)
    rows = []
    meta = {**p.as_dict(), **{k: v for k, v in sim.items() if v is not None},
            "horizon_used": sim_cfg.resolved_horizon(p), "bridge": sim_cfg.bridge, "b_star": sol.b_star}

    def add(name, est, exact):
        diff = abs(est.mean - exact)
        rows.append((name, est.mean, est.stderr, exact, diff, bool(diff <= 3 * est.stderr + est.bias_bound)))
        meta[f"{name}_bias_bound"] = est.bias_bound

    add("reward", mc.simulate_reward(law, p, sim_cfg), sol.value(sim_cfg.t0, sim_cfg.t0, x0))
    if p.beta > 0:
        add("laplace", mc.simulate_laplace(sol.b_star, p, sim_cfg), cf.laplace_w(x0, sol.b_star, p, r))
    else:
        meta["laplace"] = "skipped: beta = 0"
    l_const = _number("--ruin-rate", cfg.options["ruin_rate"])
    if not 0 <= l_const <= p.lmax:
        raise UsageError(f"--ruin-rate must lie in [0, lmax], got {l_const}")
    exact = cf.ruin_probability(x0, l_const, p.mu, p.sigma) if p.mu > l_const else 1.0
    add("ruin_probability", mc.simulate_ruin_probability(l_const, p, sim_cfg), exact)
    meta["ruin_rate"] = l_const
    failed = cfg.options["strict"] and not all(row[-1] for row in rows)
    return ["quantity", "estimate", "stderr", "closed_form", "abs_diff", "pass"], rows, meta, failed


def cmd_verify(cfg: RunConfig):
    from . import verify as vf

    p = cfg.params
    r = characteristic_roots(p)
    sol = solve_threshold(p, r)
    tol = _number("--tol", cfg.options["tol"])
    cols = ["check", "value", "pass"]
    if sol.regime is Regime.BETA0_CLASSICAL:
        return cols, [("regime", sol.regime.value, True)], {**p.as_dict(), "note": "no penalty component"}, False
    rep = vf.hjb_residual(p, r, sol, tol=tol)
    shape = vf.shape_check(p, r, sol)
    rows = [
        ("hjb_residual_below", rep.max_residual_below, rep.max_residual_below < tol),
        ("hjb_residual_above", rep.max_residual_above, rep.max_residual_above < tol),
        ("boundary_deviation", rep.max_boundary_deviation, rep.max_boundary_deviation == 0.0),
        ("sup_violation", rep.max_sup_violation, rep.max_sup_violation < tol),
        ("maximizer_is_threshold_law", rep.maximizer_is_threshold_law, rep.maximizer_is_threshold_law),
        ("shape_ok", shape.ok, shape.ok),
    ]
    if sol.b_star > 0:
        fit = vf.smooth_fit_check(p, r, sol.b_star)
        rows.append(("slope_minus_one_at_b", fit.slope_minus_one, fit.slope_minus_one < 1e-10))
        rows.append(("curvature_jump_at_b", fit.curvature_jump, fit.curvature_jump < 1e-6))
    failed = not all(row[-1] for row in rows)
    return cols, rows, {**p.as_dict(), "b_star": sol.b_star, "regime": sol.regime.value}, failed


def cmd_figure(cfg: RunConfig):
    from .figures import figure

    fig_id = _number("--id", cfg.options["fig_id"], integer=True)
    if fig_id not in (1, 2, 3, 4, 5):
        raise UsageError(f"unknown figure id {fig_id}; expected 1-5")
    data = figure(fig_id)
    return data.columns, data.rows, {"figure": fig_id, **data.meta}


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "match": cmd_match, "simulate": cmd_simulate,
            "verify": cmd_verify, "figure": cmd_figure}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        cfg = _resolve(args)
        result = COMMANDS[cfg.command](cfg)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleConstraintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, RootFindingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    columns, rows, meta = result[:3]
    failed = result[3] if len(result) > 3 else False
    _emit(render(columns, rows, meta, cfg.fmt), cfg.out)
    if cfg.verbosity:
        print(f"{cfg.command}: {len(rows)} row(s)", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
