"""Maximization of the approximate merit over feedback-gain parameters.

Two gain families are searched:

* constant gain ``lam``: a log-spaced grid followed by a bounded scalar
  refinement, against the exact constant-gain expressions when they apply and
  delay quadrature otherwise;
* piecewise-constant gain ``(lam1, lam2, t_l)``: multi-start Nelder-Mead in
  ``(log lam1, log lam2, t_l)`` against delay quadrature.

All searches are deterministic: fixed grids, fixed start sets and no random
restarts.  The reported ``f_tilde_star`` is always the objective re-evaluated
at the returned parameters.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .analytic import (
    QuadratureConfig,
    closed_form_available,
    delay_merit_at_rule,
    merit_closed_form_constant,
    merit_quadrature_delay,
)
from .feedback import DEFAULT_CLAMP, ConstantGain, PiecewiseGain
from .modeshape import ModeShape
from .quadrature import PanelRule

__all__ = [
    "Family",
    "Objective",
    "OptimizationResult",
    "optimize_constant_gain",
    "optimize_piecewise_gain",
    "delay_sweep",
]

LAMBDA_BOUNDS = (1e-2, 1e2)
# lighter rule that steers the piecewise search (errors ~1e-8); reported
# values are always re-evaluated with the refined quadrature
SEARCH_RULE = PanelRule(nodes=6, levels=5, middle=3)


class Family(str, enum.Enum):
    CONSTANT = "const"
    PIECEWISE = "pw"


class Objective(str, enum.Enum):
    CLOSED_FORM = "closed"
    QUADRATURE = "quad"


@dataclass(frozen=True)
class OptimizationResult:
    """Best gain found for one shape and delay.

    ``params`` is ``(lam,)`` for the constant family and
    ``(lam1, lam2, t_l)`` for the piecewise family.  ``error`` is set (and the
    numeric fields are NaN) when the search failed; sweeps record such rows
    instead of aborting.
    """

    shape: ModeShape
    tau: float
    family: Family
    params: tuple[float, ...]
    f_tilde_star: float
    evaluations: int
    converged: bool
    message: str = ""
    error: str | None = None
    starts: tuple[tuple[float, ...], ...] = field(default=(), repr=False)

    @property
    def lambda1(self) -> float:
        return self.params[0]

    @property
    def lambda2(self) -> float:
        return self.params[0] if self.family is Family.CONSTANT else self.params[1]

    @property
    def t_l(self) -> float:
        return math.nan if self.family is Family.CONSTANT else self.params[2]

    def strategy(self, clamp: float = DEFAULT_CLAMP):
        if self.family is Family.CONSTANT:
            return ConstantGain(self.params[0], clamp)
        return PiecewiseGain(*self.params, clamp=clamp)


class _Counted:
    """Memoizing wrapper that counts distinct objective evaluations."""

    def __init__(self, fn: Callable[..., float]):
        self.fn = fn
        self.cache: dict[tuple[float, ...], float] = {}

    def __call__(self, *args: float) -> float:
        key = tuple(float(a) for a in args)
        if key not in self.cache:
            self.cache[key] = float(self.fn(*key))
        return self.cache[key]

    @property
    def count(self) -> int:
        return len(self.cache)


def _constant_objective(shape, tau, objective, qcfg, clamp):
    if objective is None:
        use_closed = closed_form_available(shape, ConstantGain(1.0, clamp), tau)
    else:
        use_closed = Objective(objective) is Objective.CLOSED_FORM
    if use_closed:
        return lambda lam: merit_closed_form_constant(shape, lam, tau).f_tilde
    return lambda lam: merit_quadrature_delay(shape, ConstantGain(lam, clamp), tau, qcfg).f_tilde


def _scale(shape: ModeShape) -> float:
    # gains scale like 1/sqrt(time); keep the search box fixed in units of w
    return 1.0 / math.sqrt(shape.width())


def optimize_constant_gain(
    shape: ModeShape,
    tau: float,
    objective: Objective | str | None = None,
    *,
    bounds: tuple[float, float] = LAMBDA_BOUNDS,
    grid_points: int = 41,
    xtol: float = 1e-6,
    qcfg: QuadratureConfig | None = None,
    clamp: float = DEFAULT_CLAMP,
    max_widen: int = 2,
) -> OptimizationResult:
    """Best constant gain for ``shape`` at delay ``tau``.

    Parameters
    ----------
    objective
        ``"closed"`` or ``"quad"``; ``None`` uses the exact expression where
        it is valid and quadrature otherwise.
    bounds
        Search interval for ``lam`` in units of ``1/sqrt(w)``.  It is widened
        tenfold (up to ``max_widen`` times) when the optimum sits on a bound.
    xtol
        Absolute tolerance on ``lam`` for the scalar refinement.
    """
    if not tau >= 0:
        raise ValueError(f"delay must be non-negative, got {tau!r}")
    qcfg = qcfg or QuadratureConfig()
    f = _Counted(_constant_objective(shape, tau, objective, qcfg, clamp))
    lo, hi = (b * _scale(shape) for b in bounds)
    message = ""
    for _ in range(max_widen + 1):
        hi = min(hi, clamp)
        grid = np.geomspace(lo, hi, grid_points)
        values = np.array([f(x) for x in grid])
        if np.ptp(values) <= 1e-12:
            return OptimizationResult(
                shape, tau, Family.CONSTANT, (float(grid[0]),), float(values[0]), f.count, False,
                "objective flat over the search interval",
            )
        # argmax returns the first maximum, which breaks ties toward smaller lam
        i = int(np.argmax(values))
        if 0 < i < grid_points - 1 or (i == grid_points - 1 and hi >= clamp):
            break
        if i == 0:
            lo /= 10.0
        else:
            hi *= 10.0
        message = "search interval widened"
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid_points - 1)]
    res = optimize.minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded", options={"xatol": xtol})
    lam = float(res.x) if -res.fun >= values[i] else float(grid[i])
    if i == grid_points - 1 and hi >= clamp:
        # beyond some delay no finite gain beats the large-gain (heterodyne) limit
        converged, message = True, "optimum at the gain clamp"
    else:
        converged = bool(res.success) and 0 < i < grid_points - 1
        if not converged:
            message = "optimum on the search bound"
    return OptimizationResult(shape, tau, Family.CONSTANT, (lam,), f(lam), f.count, converged, message)


def default_starts(shape: ModeShape, tau: float, lam_const: float | None = None) -> list[tuple[float, float, float]]:
    """Corners and center of the start box, plus the constant optimum.

    The box spans ``lam in [0.3, 3] / sqrt(w)`` for both gains and the
    central 80% of the photon's arrival-time distribution for ``t_l``.
    """
    s = _scale(shape)
    lams = (0.3 * s, 3.0 * s)
    ts = (shape.quantile(0.1), shape.quantile(0.9))
    starts = [(l1, l2, t) for l1 in lams for l2 in lams for t in ts]
    mid = shape.quantile(0.5)
    starts.append((s, s, mid))
    if lam_const is not None:
        starts.append((lam_const, lam_const, mid))
    return starts


def optimize_piecewise_gain(
    shape: ModeShape,
    tau: float,
    *,
    starts: Sequence[tuple[float, float, float]] | None = None,
    constant: OptimizationResult | None = None,
    bounds: tuple[float, float] = LAMBDA_BOUNDS,
    xatol: float = 1e-3,
    fatol: float = 1e-6,
    max_evals_per_start: int = 400,
    qcfg: QuadratureConfig | None = None,
    search_rule: PanelRule = SEARCH_RULE,
    clamp: float = DEFAULT_CLAMP,
) -> OptimizationResult:
    """Best two-level gain ``(lam1, lam2, t_l)`` at delay ``tau``.

    Each start runs a bounded Nelder-Mead search in ``(log lam1, log lam2,
    t_l)``.  ``t_l`` ranges over the effective support extended by ``tau`` on
    the right.  The best start wins; ties go to the smaller ``lam1``, then the
    smaller ``lam2``.

    ``constant`` is the constant-gain optimum at the same delay; it is
    computed when not given and always seeds one start at
    ``(lam*, lam*, median arrival time)``, so the result is never worse than
    the constant family.
    """
    if not tau >= 0:
        raise ValueError(f"delay must be non-negative, got {tau!r}")
    qcfg = qcfg or QuadratureConfig()
    if constant is None:
        constant = optimize_constant_gain(shape, tau, qcfg=qcfg, clamp=clamp)
    if starts is None:
        starts = default_starts(shape, tau, constant.lambda1)
    else:
        starts = [*starts, *default_starts(shape, tau, constant.lambda1)[-1:]]

    lo, hi = shape.effective_support()
    s = _scale(shape)
    # the box always contains the constant optimum, which may sit at the clamp
    lam_c = constant.lambda1
    log_lo = math.log(min(bounds[0] * s, lam_c))
    log_hi = math.log(min(max(bounds[1] * s, lam_c), clamp))
    box = [(log_lo, log_hi), (log_lo, log_hi), (lo, hi + tau)]

    def final(l1, l2, tl):
        return merit_quadrature_delay(shape, PiecewiseGain(l1, l2, tl, clamp), tau, qcfg).f_tilde

    def search(l1, l2, tl):
        return delay_merit_at_rule(shape, PiecewiseGain(l1, l2, tl, clamp), tau, search_rule, qcfg.eps)

    f = _Counted(final)
    g = _Counted(search)

    def neg(x):
        x = np.clip(x, [b[0] for b in box], [b[1] for b in box])
        return -g(math.exp(x[0]), math.exp(x[1]), x[2])

    t_step = 0.1 * (shape.quantile(0.9) - shape.quantile(0.1))
    best = None
    n_conv = 0
    for l1, l2, tl in starts:
        x0 = np.array([math.log(l1), math.log(l2), tl])
        x0 = np.clip(x0, [b[0] for b in box], [b[1] for b in box])
        simplex = [x0]
        for j, step in enumerate((0.3, 0.3, t_step)):
            v = x0.copy()
            # step inward when the start sits on the upper edge of the box
            v[j] += step if x0[j] + step <= box[j][1] else -step
            simplex.append(v)
        res = optimize.minimize(
            neg, x0, method="Nelder-Mead", bounds=box,
            options={"initial_simplex": np.array(simplex), "xatol": xatol, "fatol": fatol, "maxfev": max_evals_per_start},
        )
        n_conv += bool(res.success)
        x = np.clip(res.x, [b[0] for b in box], [b[1] for b in box])
        cand = (math.exp(x[0]), math.exp(x[1]), float(x[2]))
        val = f(*cand)
        if best is None or val > best[0] + 1e-12 or (abs(val - best[0]) <= 1e-12 and cand[:2] < best[1][:2]):
            best = (val, cand)
    val, params = best
    message = f"{n_conv}/{len(starts)} starts converged"
    return OptimizationResult(
        shape, tau, Family.PIECEWISE, params, f(*params), f.count + g.count, n_conv > 0, message,
        starts=tuple(tuple(st) for st in starts),
    )


def _failed(shape, tau, family, exc) -> OptimizationResult:
    nan = (math.nan,) if family is Family.CONSTANT else (math.nan,) * 3
    return OptimizationResult(shape, tau, family, nan, math.nan, 0, False, error=f"{type(exc).__name__}: {exc}")


def delay_sweep(
    shape: ModeShape,
    family: Family | str,
    taus: Sequence[float],
    *,
    warm_start: bool = True,
    qcfg: QuadratureConfig | None = None,
    clamp: float = DEFAULT_CLAMP,
    progress: Callable[[OptimizationResult], None] | None = None,
) -> list[OptimizationResult]:
    """Optimize at every delay in the sorted grid ``taus``.

    With ``warm_start`` the piecewise search at each delay after the first
    starts only from the previous optimum, the constant optimum and the box
    center, instead of the full start set.  Failures are recorded in the
    returned rows and the sweep continues.
    """
    family = Family(family)
    taus = [float(t) for t in taus]
    if any(t < 0 for t in taus) or taus != sorted(taus):
        raise ValueError("delay grid must be sorted and non-negative")
    out: list[OptimizationResult] = []
    prev = None
    for tau in taus:
        try:
            const = optimize_constant_gain(shape, tau, qcfg=qcfg, clamp=clamp)
            if family is Family.CONSTANT:
                row = const
            else:
                starts = None
                if warm_start and prev is not None and prev.error is None:
                    s = _scale(shape)
                    starts = [prev.params, (s, s, shape.quantile(0.5))]
                row = optimize_piecewise_gain(shape, tau, starts=starts, constant=const, qcfg=qcfg, clamp=clamp)
        except Exception as exc:  # recorded in-row; the sweep goes on
            row = _failed(shape, tau, family, exc)
        out.append(row)
        prev = row
        if progress is not None:
            progress(row)
    return out
