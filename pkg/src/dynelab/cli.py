"""Command-line experiment runner.

Every subcommand writes one CSV table (to ``--out`` or stdout) and a JSON echo
of its resolved configuration (next to the CSV as ``<out>.json``, or on
stderr).  Each CSV row carries a short hash of that configuration.

Exit codes: 0 on success, 1 when any row records a numerical failure (or a
validation check fails), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    ClosedFormOutOfRange,
    QuadratureConfig,
    ToleranceNotMet,
    merit_closed_form_constant,
    merit_quadrature_delay,
    merit_quadrature_zero_delay,
)
from .feedback import (
    DEFAULT_CLAMP,
    AdaptiveIntegral,
    ConstantGain,
    OptimalGain,
    PiecewiseGain,
    describe_lo,
    describe_strategy,
    parse_lo,
    parse_strategy,
)
from .merit import table1
from .modeshape import ModeShape, ShapeKind, normalized, parse_shape
from .optimizer import Family, OptimizationResult, delay_sweep, optimize_constant_gain, optimize_piecewise_gain
from .trajectory import DEFAULT_SEED, SimulationConfig, estimate_merit

log = logging.getLogger("dynelab")

SEED_ENV = "DYNELAB_SEED"

SIMULATE_COLUMNS = [
    "shape", "lo_model", "tau", "dt", "n_traj", "f_hat", "f_hat_se", "m2_hat", "m2_se",
    "m4_hat", "m4_se", "f_tilde_hat", "seed", "error", "config_hash",
]
MERIT_COLUMNS = [
    "shape", "strategy", "lambda", "lambda1", "lambda2", "tl", "tau", "f_tilde", "err_est",
    "method", "error", "config_hash",
]
SWEEP_COLUMNS = [
    "shape", "family", "tau", "lambda1", "lambda2", "t_l", "f_tilde_star", "evals", "converged",
    "error", "config_hash",
]
TABLE1_COLUMNS = [
    "measurement", "exact", "approx", "mc_f_hat", "mc_f_hat_se", "mc_f_tilde_hat", "mc_f_tilde_se",
    "n_traj", "seed", "config_hash",
]
VALIDATE_COLUMNS = ["criterion", "check", "value", "target", "tolerance", "passed", "config_hash"]


class UsageError(Exception):
    """Malformed input; maps to exit code 2."""


# ---------------------------------------------------------------- parsing


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive of ``b``), a comma list, or a single value."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must look like start:stop:step, got {text!r}")
        a, b, h = (float(p) for p in parts)
        if not h > 0 or b < a:
            raise ValueError(f"grid needs step > 0 and stop >= start, got {text!r}")
        n = math.floor((b - a) / h + 1e-9)
        return [round(a + i * h, 12) for i in range(n + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


def parse_shapes(text: str) -> list[ModeShape]:
    if text.strip() == "all":
        return [normalized(k) for k in ShapeKind]
    return [parse_shape(p) for p in text.split(",") if p.strip()]


def _shape_list(text):
    try:
        return parse_shapes(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _grid(text):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text):
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise UsageError(f"{path}:{number}: expected key=value, got {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynelab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file of defaults; flags override it")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--seed", type=int, help=f"base seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    common.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--dt", type=_positive_float, default=1e-3, help="time step in units of w")
    mc.add_argument("--scheme", choices=("euler", "milstein"), default="milstein")
    mc.add_argument("--substeps", type=_positive_int, default=1, help="noise draws summed per step")

    quad = argparse.ArgumentParser(add_help=False)
    quad.add_argument("--tol", type=_positive_float, default=1e-6, help="quadrature tolerance on F~")
    quad.add_argument("--clamp", type=_positive_float, default=DEFAULT_CLAMP, help="upper bound on the gain")

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("table1", parents=[common, mc], help="reference merits with Monte Carlo estimates")
    p.add_argument("--shape", type=_shape_list, default=[normalized(ShapeKind.RECT)])
    p.add_argument("--n-traj", type=_positive_int, default=100_000)
    p.add_argument("--no-mc", action="store_true", help="analytic columns only")

    p = sub.add_parser("merit", parents=[common, mc, quad], help="approximate merit of one gain")
    p.add_argument("--shape", type=_shape_list, required=True, help="rect, bilat:kappa=4, ... or all")
    p.add_argument("--strategy", required=True, help="opt, const:<lam> or pw:<lam1>,<lam2>,<t_l>")
    p.add_argument("--tau", type=_grid, default=[0.0], help="delay, list or start:stop:step")
    p.add_argument("--method", choices=("quad", "quad0", "closed", "mc"), default="quad")
    p.add_argument("--n-traj", type=_positive_int, default=100_000)

    p = sub.add_parser("simulate", parents=[common, mc], help="Monte Carlo estimate of the merit")
    p.add_argument("--shape", type=_shape_list, required=True)
    p.add_argument("--lo", nargs="+", required=True, help="homodyne[:phi0], heterodyne[:delta], adaptive:<strategy>[:tau=<tau>]")
    p.add_argument("--n-traj", type=_positive_int, default=10_000)
    p.add_argument("--clamp", type=_positive_float, default=DEFAULT_CLAMP)

    for name, help_text in (("optimize", "best gain at each delay, independently"), ("sweep", "warm-started delay sweep")):
        p = sub.add_parser(name, parents=[common, quad], help=help_text)
        p.add_argument("--shape", "--shapes", dest="shape", type=_shape_list, required=True)
        p.add_argument("--family", choices=[f.value for f in Family], default="const")
        p.add_argument("--tau", type=_grid, default=[0.0])
        if name == "optimize":
            p.add_argument("--objective", choices=("auto", "closed", "quad"), default="auto")
        else:
            p.add_argument("--no-warm-start", action="store_true")

    p = sub.add_parser("validate", parents=[common], help="run the cross-check suite")
    p.add_argument("--quick", action="store_true", help="ten times smaller Monte Carlo ensembles")
    p.add_argument("--criteria", type=lambda s: [int(x) for x in s.split(",")], help="subset, e.g. 1,2,5")
    return parser


def _parse(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config and command is not None:
        try:
            values = read_config_file(known.config)
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
        except UsageError as exc:
            parser.error(str(exc))
        subparser = subparsers[command]
        actions = {a.dest: a for a in subparser._actions}
        unknown = sorted(set(values) - set(actions) - {"config"})
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        for key, value in values.items():
            action = actions[key]
            # a value from the file satisfies a required option
            action.required = False
            if action.nargs in ("+", "*"):
                values[key] = value.split()
            elif isinstance(action, argparse._StoreTrueAction):
                values[key] = _config_bool(key, value, parser)
        # string defaults go through each option's type conversion
        subparser.set_defaults(**values)
    args = parser.parse_args(argv)
    args.seed = _resolve_seed(args, argv, parser)
    return args


def _config_bool(key: str, value: str, parser) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    parser.error(f"config key {key} expects true or false, got {value!r}")


def _resolve_seed(args, argv, parser) -> int:
    explicit = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    if explicit:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            parser.error(f"{SEED_ENV} must be an integer, got {env!r}")
    return args.seed if args.seed is not None else DEFAULT_SEED


# ---------------------------------------------------------------- output


def _jsonable(value):
    if isinstance(value, ModeShape):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def config_echo(args: argparse.Namespace) -> dict:
    skip = {"out", "config", "verbose"}
    cfg = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["version"] = __version__
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_outputs(rows: Iterable[dict], columns: list[str], args, cfg: dict) -> None:
    digest = config_hash(cfg)
    echo = json.dumps({**cfg, "config_hash": digest}, indent=2, sort_keys=True)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        stream = path.open("w", newline="")
        path.with_suffix(".json").write_text(echo + "\n")
    else:
        stream = sys.stdout
        print(echo, file=sys.stderr)
    try:
        writer = csv.DictWriter(stream, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c, digest if c == "config_hash" else None)) for c in columns})
            stream.flush()
    finally:
        if stream is not sys.stdout:
            stream.close()


# ---------------------------------------------------------------- commands


def _round_tau(tau: float, dt: float) -> float:
    rounded = round(tau / dt) * dt
    if abs(rounded - tau) > 1e-12:
        log.warning("delay %g rounded to %g, a multiple of dt=%g", tau, rounded, dt)
    return rounded


def _sim_config(args, **overrides) -> SimulationConfig:
    return SimulationConfig(dt=args.dt, n_traj=args.n_traj, base_seed=args.seed, scheme=args.scheme,
                            substeps=args.substeps, **overrides)


def cmd_table1(args, state):
    shape = args.shape[0]
    lo_models = {
        "homodyne": parse_lo("homodyne"),
        "heterodyne": parse_lo("heterodyne"),
        "adaptive": AdaptiveIntegral(OptimalGain(shape)),
    }
    for row in table1():
        out = {"measurement": row.measurement, "exact": row.exact, "approx": row.approx, "seed": args.seed}
        if not args.no_mc:
            log.info("simulating %s on %s", row.measurement, shape)
            est = estimate_merit(shape, lo_models[row.measurement], _sim_config(args))
            out.update(mc_f_hat=est.f_hat, mc_f_hat_se=est.f_hat_se, mc_f_tilde_hat=est.f_tilde_hat,
                       mc_f_tilde_se=est.f_tilde_se, n_traj=est.n_traj)
        yield out


def _strategy_columns(strategy) -> dict:
    if isinstance(strategy, ConstantGain):
        return {"lambda": strategy.lam}
    if isinstance(strategy, PiecewiseGain):
        return {"lambda1": strategy.lam1, "lambda2": strategy.lam2, "tl": strategy.t_switch}
    return {}


def cmd_merit(args, state):
    qcfg = QuadratureConfig(tol=args.tol)
    for shape in args.shape:
        try:
            strategy = parse_strategy(args.strategy, shape, args.clamp)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"bad --strategy: {exc}") from None
        for tau in args.tau:
            row = {"shape": str(shape), "strategy": describe_strategy(strategy), "method": args.method,
                   **_strategy_columns(strategy)}
            try:
                if args.method == "closed":
                    if not isinstance(strategy, ConstantGain):
                        raise ClosedFormOutOfRange("closed forms exist for constant gains only")
                    res = merit_closed_form_constant(shape, strategy.lam, tau)
                    row.update(f_tilde=res.f_tilde, err_est=res.error_estimate)
                elif args.method == "quad0":
                    if tau != 0:
                        raise ValueError("the quad0 route handles zero delay only")
                    res = merit_quadrature_zero_delay(shape, strategy, qcfg)
                    row.update(f_tilde=res.f_tilde, err_est=res.error_estimate)
                elif args.method == "quad":
                    res = merit_quadrature_delay(shape, strategy, tau, qcfg)
                    row.update(f_tilde=res.f_tilde, err_est=res.error_estimate)
                else:
                    tau = _round_tau(tau, args.dt)
                    est = estimate_merit(shape, AdaptiveIntegral(strategy, tau), _sim_config(args))
                    row.update(f_tilde=est.f_tilde_hat, err_est=est.f_tilde_se)
            except ToleranceNotMet as exc:
                row.update(f_tilde=exc.best.f_tilde, err_est=exc.best.error_estimate, error=str(exc))
            except (ClosedFormOutOfRange, ValueError, FloatingPointError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            row["tau"] = tau
            if row.get("error"):
                state["failed"] = True
            yield row


def cmd_simulate(args, state):
    for shape in args.shape:
        for spec in args.lo:
            try:
                lo = parse_lo(spec, shape, args.clamp)
            except (ValueError, TypeError) as exc:
                raise UsageError(f"bad --lo {spec!r}: {exc}") from None
            tau = 0.0
            if isinstance(lo, AdaptiveIntegral):
                tau = _round_tau(lo.tau, args.dt)
                lo = AdaptiveIntegral(lo.strategy, tau, lo.phi0)
            row = {"shape": str(shape), "lo_model": describe_lo(lo), "tau": tau, "dt": args.dt,
                   "n_traj": args.n_traj, "seed": args.seed}
            try:
                log.info("simulating %s on %s", row["lo_model"], shape)
                est = estimate_merit(shape, lo, _sim_config(args))
                row.update(f_hat=est.f_hat, f_hat_se=est.f_hat_se, m2_hat=est.m2_hat, m2_se=est.m2_se,
                           m4_hat=est.m4_hat, m4_se=est.m4_se, f_tilde_hat=est.f_tilde_hat)
            except (ValueError, FloatingPointError, MemoryError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
                state["failed"] = True
            yield row


def _sweep_row(res: OptimizationResult, state) -> dict:
    if res.error:
        state["failed"] = True
    return {
        "shape": str(res.shape), "family": res.family.value, "tau": res.tau, "lambda1": res.lambda1,
        "lambda2": res.lambda2, "t_l": res.t_l, "f_tilde_star": res.f_tilde_star, "evals": res.evaluations,
        "converged": res.converged, "error": res.error or (None if res.converged else res.message),
    }


def cmd_optimize(args, state):
    qcfg = QuadratureConfig(tol=args.tol)
    objective = None if args.objective == "auto" else args.objective
    for shape in args.shape:
        for tau in args.tau:
            log.info("optimizing %s family on %s at tau=%g", args.family, shape, tau)
            try:
                const = optimize_constant_gain(shape, tau, objective, qcfg=qcfg, clamp=args.clamp)
                if args.family == Family.CONSTANT.value:
                    res = const
                else:
                    res = optimize_piecewise_gain(shape, tau, constant=const, qcfg=qcfg, clamp=args.clamp)
            except (ValueError, ToleranceNotMet) as exc:
                nan = (math.nan,) if args.family == "const" else (math.nan,) * 3
                res = OptimizationResult(shape, tau, Family(args.family), nan, math.nan, 0, False,
                                         error=f"{type(exc).__name__}: {exc}")
            yield _sweep_row(res, state)


def cmd_sweep(args, state):
    if sorted(args.tau) != args.tau or any(t < 0 for t in args.tau):
        raise UsageError("the delay grid must be sorted and non-negative")
    qcfg = QuadratureConfig(tol=args.tol)
    for shape in args.shape:
        log.info("sweeping %s family on %s over %d delays", args.family, shape, len(args.tau))
        rows = delay_sweep(shape, args.family, args.tau, warm_start=not args.no_warm_start, qcfg=qcfg,
                           clamp=args.clamp)
        for res in rows:
            yield _sweep_row(res, state)


def cmd_validate(args, state):
    from . import validation

    wanted = args.criteria or list(validation.CRITERIA)
    unknown = set(wanted) - set(validation.CRITERIA)
    if unknown:
        raise UsageError(f"unknown criteria: {sorted(unknown)}")
    for number, check in [(n, c) for n in wanted for c in _run_criterion(validation, n, args.quick)]:
        state["failed"] = state["failed"] or not check.passed
        log.info("[%s] criterion %d: %s", "PASS" if check.passed else "FAIL", number, check.name)
        yield {"criterion": number, "check": check.name, "value": check.value, "target": check.target,
               "tolerance": check.tolerance, "passed": check.passed}


def _run_criterion(validation, number, quick):
    fn = validation.CRITERIA[number]
    sizes = {1: 100_000, 7: 10_000, 10: 10_000, 11: 100_000}
    if number in sizes:
        return fn(n_traj=sizes[number] // (10 if quick else 1))
    return fn()


def _precheck(args) -> None:
    """Reject malformed specs before any output is written."""
    try:
        if args.command == "merit":
            for shape in args.shape:
                parse_strategy(args.strategy, shape, args.clamp)
        elif args.command == "simulate":
            for shape in args.shape:
                for spec in args.lo:
                    parse_lo(spec, shape, args.clamp)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if args.command == "sweep" and (sorted(args.tau) != args.tau or any(t < 0 for t in args.tau)):
        raise UsageError("the delay grid must be sorted and non-negative")
    if args.command == "validate" and args.criteria:
        from .validation import CRITERIA

        unknown = set(args.criteria) - set(CRITERIA)
        if unknown:
            raise UsageError(f"unknown criteria: {sorted(unknown)}")


COMMANDS = {
    "table1": (cmd_table1, TABLE1_COLUMNS),
    "merit": (cmd_merit, MERIT_COLUMNS),
    "simulate": (cmd_simulate, SIMULATE_COLUMNS),
    "optimize": (cmd_optimize, SWEEP_COLUMNS),
    "sweep": (cmd_sweep, SWEEP_COLUMNS),
    "validate": (cmd_validate, VALIDATE_COLUMNS),
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    handler, columns = COMMANDS[args.command]
    state = {"failed": False}
    cfg = config_echo(args)
    try:
        _precheck(args)
        with np.errstate(over="ignore", under="ignore"):
            write_outputs(handler(args, state), columns, args, cfg)
    except UsageError as exc:
        print(f"dynelab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 1 if state["failed"] else 0


if __name__ == "__main__":
    raise SystemExit(main())
