"""Cross-check suite behind ``dynelab validate`` and the acceptance tests.

Each ``check_*`` function runs one family of checks and returns a list of
:class:`Check` rows.  Oracles are computed independently of the code under
test wherever possible (numerical integration of textbook densities, closed
forms against quadrature, Monte Carlo against analytics).
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .analytic import (
    QuadratureConfig,
    closed_form_available,
    merit_closed_form_constant,
    merit_quadrature_delay,
    merit_quadrature_zero_delay,
)
from .feedback import (
    AdaptiveIntegral,
    ConstantGain,
    Heterodyne,
    Homodyne,
    OptimalGain,
    PiecewiseGain,
    describe_strategy,
)
from .merit import table1
from .modeshape import ShapeKind, normalized
from .optimizer import Family, delay_sweep, optimize_constant_gain
from .trajectory import SimulationConfig, estimate_merit, simulate_protocol

SHAPES = (ShapeKind.RECT, ShapeKind.BILAT, ShapeKind.FALLEXP, ShapeKind.RISEEXP)
# Fig. 3 top-to-bottom order of the constant-gain curves
ORDER = (ShapeKind.RISEEXP, ShapeKind.BILAT, ShapeKind.RECT, ShapeKind.FALLEXP)
CONST_SWEEP_TAUS = tuple(round(0.025 * i, 10) for i in range(21))
PW_SWEEP_TAUS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
# (shape, strategy, tau) points for the Monte Carlo versus quadrature check
MC_POINTS = (
    (ShapeKind.RECT, ConstantGain(1.5), 0.0),
    (ShapeKind.RECT, ConstantGain(1.0), 0.1),
    (ShapeKind.BILAT, ConstantGain(2.0), 0.05),
    (ShapeKind.BILAT, PiecewiseGain(1.5, 0.8, 0.15), 0.1),
    (ShapeKind.FALLEXP, ConstantGain(0.5), 0.0),
    (ShapeKind.FALLEXP, ConstantGain(1.5), 0.1),
    (ShapeKind.RISEEXP, ConstantGain(1.0), 0.0),
    (ShapeKind.RISEEXP, ConstantGain(1.2), 0.2),
)


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool

    @classmethod
    def near(cls, criterion, name, value, target, tol):
        return cls(criterion, name, float(value), float(target), float(tol), bool(abs(value - target) <= tol))

    @classmethod
    def at_least(cls, criterion, name, value, bound, slack=0.0):
        return cls(criterion, name, float(value), float(bound), float(slack), bool(value >= bound - slack))


def _tight() -> QuadratureConfig:
    return QuadratureConfig(tol=1e-10, max_refinements=4)


def check_table1(n_traj: int = 100_000, dt: float = 1e-3) -> list[Check]:
    """Reference constants against numerical moments, plus Monte Carlo."""
    out = []
    pdf = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    # ostensible homodyne X is standard normal; heterodyne |A| is Rayleigh with <|A|^2> = 1
    hom = 2 * integrate.quad(lambda x: x * pdf(x), 0, np.inf, epsabs=1e-14)[0]
    ray = lambda r: 2 * r * math.exp(-r * r)
    het = integrate.quad(lambda r: r * ray(r), 0, np.inf, epsabs=1e-14)[0]
    m4_hom = 2 * integrate.quad(lambda x: x**4 * pdf(x), 0, np.inf, epsabs=1e-14)[0]
    m4_het = integrate.quad(lambda r: r**4 * ray(r), 0, np.inf, epsabs=1e-14)[0]
    oracles = {
        "homodyne": (hom, (9 - m4_hom) / 8),
        "heterodyne": (het, (9 - m4_het) / 8),
        "adaptive": (1.0, (9 - 1.0) / 8),
    }
    for row in table1():
        exact, approx = oracles[row.measurement]
        out.append(Check.near(1, f"{row.measurement} exact", row.exact, exact, 1e-12))
        out.append(Check.near(1, f"{row.measurement} approx", row.approx, approx, 1e-12))
    cfg = SimulationConfig(dt=dt, n_traj=n_traj)
    shape = normalized(ShapeKind.RECT)
    for name, lo, exact in (("homodyne", Homodyne(), hom), ("heterodyne", Heterodyne(), het)):
        est = estimate_merit(shape, lo, cfg)
        out.append(Check.near(1, f"{name} MC f_hat", est.f_hat, exact, 3 * est.f_hat_se))
    return out


def check_canonical_cancellation() -> list[Check]:
    return [
        Check.near(2, f"{k.value} optimal gain", merit_quadrature_zero_delay(normalized(k), OptimalGain(normalized(k))).f_tilde, 1.0, 1e-6)
        for k in SHAPES
    ]


def check_rising_optimum() -> list[Check]:
    res = optimize_constant_gain(normalized(ShapeKind.RISEEXP), 0.0)
    return [
        Check.near(3, "rising lambda*", res.lambda1, math.sqrt(2), 1e-4),
        Check.near(3, "rising F~*", res.f_tilde_star, 1.0, 1e-5),
    ]


def check_delay_limit() -> list[Check]:
    out = []
    for k in SHAPES:
        shape = normalized(k)
        a = merit_quadrature_delay(shape, ConstantGain(1.0), 0.0, _tight()).f_tilde
        b = merit_quadrature_zero_delay(shape, ConstantGain(1.0), _tight()).f_tilde
        out.append(Check.near(4, f"{k.value} tau=0 routes", a, b, 1e-8))
    return out


def check_closed_forms() -> list[Check]:
    out = []
    for k in SHAPES:
        shape = normalized(k)
        for lam in (0.5, 1.0, 2.0, 4.0):
            for tau in (0.0, 0.05, 0.1, 0.2):
                cf = merit_closed_form_constant(shape, lam, tau).f_tilde
                q = merit_quadrature_delay(shape, ConstantGain(lam), tau).f_tilde
                out.append(Check.near(5, f"{k.value} lam={lam} tau={tau}", cf, q, 1e-6))
    return out


def check_asymptotes() -> list[Check]:
    out = []
    for k in SHAPES:
        shape = normalized(k)
        cases = [(1e-3, 0.0, 0.75), (1e-3, 0.1, 0.75), (1e3, 0.1, 0.875)]
        for lam, tau, target in cases:
            q = merit_quadrature_delay(shape, ConstantGain(lam), tau).f_tilde
            out.append(Check.near(6, f"{k.value} quad lam={lam:g} tau={tau}", q, target, 1e-3))
            if closed_form_available(shape, ConstantGain(lam), tau):
                cf = merit_closed_form_constant(shape, lam, tau).f_tilde
                out.append(Check.near(6, f"{k.value} closed lam={lam:g} tau={tau}", cf, target, 1e-3))
    return out


def completeness_models(shape_kind: ShapeKind, tau: float):
    median = normalized(shape_kind).quantile(0.5)
    return {
        "homodyne": Homodyne(),
        "heterodyne": Heterodyne(),
        "adaptive const": AdaptiveIntegral(ConstantGain(1.5), tau),
        "adaptive pw": AdaptiveIntegral(PiecewiseGain(2.0, 1.0, median), tau),
    }


def check_completeness(n_traj: int = 10_000, dt: float = 1e-3) -> list[Check]:
    out = []
    cfg = SimulationConfig(dt=dt, n_traj=n_traj)
    for k in SHAPES:
        for tau in (0.0, 0.1):
            for name, lo in completeness_models(k, tau).items():
                est = estimate_merit(normalized(k), lo, cfg)
                out.append(Check.near(7, f"{k.value} {name} tau={tau}", est.m2_hat, 1.0, 3 * est.m2_se))
    return out


def check_constant_sweep(sweeps=None) -> list[Check]:
    sweeps = sweeps or {k: delay_sweep(normalized(k), Family.CONSTANT, CONST_SWEEP_TAUS) for k in SHAPES}
    out = []
    for k, rows in sweeps.items():
        f = [r.f_tilde_star for r in rows]
        worst = max((b - a for a, b in zip(f, f[1:])), default=0.0)
        out.append(Check(8, f"(a) {k.value} non-increasing", worst, 0.0, 1e-6, worst <= 1e-6))
    # once every shape's optimum sits at the gain clamp the maxima agree to
    # ~1e-13, below the accuracy of the quadrature objective, so ties are
    # judged at the optimizer's reproducibility level
    tie = 1e-9
    for i, tau in enumerate(CONST_SWEEP_TAUS):
        gaps = [sweeps[a][i].f_tilde_star - sweeps[b][i].f_tilde_star for a, b in zip(ORDER, ORDER[1:])]
        out.append(Check(8, f"(b) ordering tau={tau}", min(gaps), 0.0, tie, min(gaps) >= -tie))
    rise = sweeps[ShapeKind.RISEEXP][CONST_SWEEP_TAUS.index(0.3)]
    out.append(Check.at_least(8, "(c) rising at tau=0.3", rise.f_tilde_star, 0.875))
    for k in SHAPES:
        out.append(Check(8, f"(d) {k.value} at tau=0", sweeps[k][0].f_tilde_star, 0.875, 0.0, sweeps[k][0].f_tilde_star > 0.875))
    return out


def check_piecewise(progress: Callable | None = None) -> list[Check]:
    out = []
    for k in SHAPES:
        shape = normalized(k)
        pw = delay_sweep(shape, Family.PIECEWISE, PW_SWEEP_TAUS, progress=progress)
        for row in pw:
            const = optimize_constant_gain(shape, row.tau)
            out.append(Check.at_least(9, f"{k.value} tau={row.tau} pw >= const", row.f_tilde_star, const.f_tilde_star, 1e-7))
        at = pw[PW_SWEEP_TAUS.index(0.1)]
        gap = at.lambda1 - at.lambda2
        if k is ShapeKind.RISEEXP:
            out.append(Check(9, f"{k.value} lam1 <= lam2 at tau=0.1", gap, 0.0, 0.0, gap <= 0))
        else:
            out.append(Check(9, f"{k.value} lam1 > lam2 at tau=0.1", gap, 0.0, 0.0, gap > 0))
    return out


def check_protocol(n_traj: int = 10_000, dt: float = 1e-3) -> list[Check]:
    out = []
    cfg = SimulationConfig(dt=dt, n_traj=n_traj)
    shape = normalized(ShapeKind.RISEEXP)
    rho = simulate_protocol(shape, AdaptiveIntegral(OptimalGain(shape)), cfg).rho
    for i in range(2):
        for j in range(2):
            out.append(Check.near(10, f"ideal rho[{i},{j}]", abs(rho[i, j] - 0.5), 0.0, 0.02))
    rect = normalized(ShapeKind.RECT)
    state = simulate_protocol(rect, Homodyne(), cfg)
    est = estimate_merit(rect, Homodyne(), cfg)
    out.append(Check.near(10, "homodyne Re rho[0,1] vs f_hat/2", state.rho[0, 1].real, est.f_hat / 2, 3 * state.stderr[0, 1]))
    return out


def check_mc_vs_quadrature(n_traj: int = 100_000, dt: float = 1e-3) -> list[Check]:
    out = []
    cfg = SimulationConfig(dt=dt, n_traj=n_traj)
    for k, strategy, tau in MC_POINTS:
        shape = normalized(k)
        est = estimate_merit(shape, AdaptiveIntegral(strategy, tau), cfg)
        q = merit_quadrature_delay(shape, strategy, tau).f_tilde
        out.append(Check.near(11, f"{k.value} {describe_strategy(strategy)} tau={tau}", est.f_tilde_hat, q, 3 * est.m4_se / 8))
    return out


CRITERIA: dict[int, Callable[..., list[Check]]] = {
    1: check_table1,
    2: check_canonical_cancellation,
    3: check_rising_optimum,
    4: check_delay_limit,
    5: check_closed_forms,
    6: check_asymptotes,
    7: check_completeness,
    8: check_constant_sweep,
    9: check_piecewise,
    10: check_protocol,
    11: check_mc_vs_quadrature,
}


def run_all(quick: bool = False, progress: Callable[[Check], None] | None = None) -> list[Check]:
    """Every criterion; ``quick`` shrinks the Monte Carlo ensembles tenfold."""
    scale = 10 if quick else 1
    kwargs = {1: {"n_traj": 100_000 // scale}, 7: {"n_traj": 10_000 // scale},
              10: {"n_traj": 10_000 // scale}, 11: {"n_traj": 100_000 // scale}}
    out = []
    for number, fn in CRITERIA.items():
        rows = fn(**kwargs.get(number, {}))
        out.extend(rows)
        if progress is not None:
            for row in rows:
                progress(row)
    return out
