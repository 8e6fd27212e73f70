"""Feedback gains and local-oscillator phase laws.

The adaptive LO phase is the integral feedback law

    Phi(t) = Phi0 + int_{-inf}^{t - tau} lambda(s) dW(s),

so the only statistic of a gain that the analytics need is the phase
variance ``int_a^b lambda(s)^2 ds``.  Every gain here provides it in closed
form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .modeshape import ModeShape, ShapeKind

__all__ = [
    "DEFAULT_CLAMP",
    "OptimalGain",
    "ConstantGain",
    "PiecewiseGain",
    "GainStrategy",
    "Homodyne",
    "Heterodyne",
    "AdaptiveIntegral",
    "LoPhaseModel",
    "gain_value",
    "phase_variance",
    "lo_phase_increment",
    "parse_strategy",
    "parse_lo",
    "describe_strategy",
    "describe_lo",
]

DEFAULT_CLAMP = 1e3


def _check_clamp(clamp):
    if not clamp > 0:
        raise ValueError(f"clamp must be positive, got {clamp!r}")


@dataclass(frozen=True)
class OptimalGain:
    """``lambda(t) = sqrt(u(t)/U(t))``, capped at ``clamp``.

    Where the density vanishes the gain is zero.  At points with ``u > 0``
    and ``U = 0`` (the leading edge of a compact pulse) the gain equals the
    clamp.  ``clamp=math.inf`` disables the cap.
    """

    shape: ModeShape
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        _check_clamp(self.clamp)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = set(self.shape.breakpoints)
        t_c = self.crossover
        if math.isfinite(t_c):
            pts.add(t_c)
        return tuple(sorted(pts))

    @property
    def crossover(self) -> float:
        """Time before which the cap is active (``-inf`` if never)."""
        c2 = self.clamp**2
        r = self.shape.rate
        kind = self.shape.kind
        if math.isinf(c2):
            return -math.inf
        if kind is ShapeKind.RECT:
            return min(1.0 / c2, r)
        if kind is ShapeKind.FALLEXP:
            return math.log1p(r / c2) / r
        if kind is ShapeKind.BILAT:
            return -math.inf if c2 >= r else math.log(0.5 * (1.0 + r / c2)) / r
        return -math.inf if c2 >= r else 0.0

    def value(self, t):
        t = np.asarray(t, dtype=float)
        u = self.shape.density(t)
        big_u = self.shape.cumulative(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.sqrt(u / big_u)
        g = np.where(u > 0, np.where(big_u > 0, g, math.inf), 0.0)
        out = np.minimum(g, self.clamp)
        return out[()] if out.ndim == 0 else out

    def _antiderivative(self, x):
        shape = self.shape
        lo = shape.support[0]
        t_c = self.crossover
        c2 = self.clamp**2
        if math.isinf(c2):
            with np.errstate(invalid="ignore"):
                return shape.log_cumulative(x)
        if math.isinf(t_c):
            return shape.log_cumulative(x)
        if math.isfinite(lo):
            clamped = c2 * (np.clip(x, lo, t_c) - lo)
        else:
            clamped = c2 * np.minimum(x, t_c)
        free = shape.log_cumulative(np.maximum(x, t_c)) - shape.log_cumulative(t_c)
        return clamped + free

    def variance(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        with np.errstate(invalid="ignore"):
            out = self._antiderivative(b) - self._antiderivative(a)
        if math.isinf(self.clamp):
            # zero gain before the support: both ends there means zero variance
            lo = self.shape.support[0]
            out = np.where(b <= lo, 0.0, out)
        return out


@dataclass(frozen=True)
class ConstantGain:
    lam: float
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        _check_clamp(self.clamp)
        if not 0 <= self.lam <= self.clamp:
            raise ValueError(f"constant gain must lie in [0, clamp], got {self.lam!r}")

    breakpoints = ()

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, float(self.lam))
        return out[()] if out.ndim == 0 else out

    def variance(self, a, b):
        return self.lam**2 * (np.asarray(b, dtype=float) - np.asarray(a, dtype=float))


@dataclass(frozen=True)
class PiecewiseGain:
    """``lam1`` for ``t <= t_switch``, ``lam2`` afterwards."""

    lam1: float
    lam2: float
    t_switch: float
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        _check_clamp(self.clamp)
        for lam in (self.lam1, self.lam2):
            if not 0 <= lam <= self.clamp:
                raise ValueError(f"piecewise gains must lie in [0, clamp], got {lam!r}")
        if not math.isfinite(self.t_switch):
            raise ValueError("switch time must be finite")

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (float(self.t_switch),)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= self.t_switch, float(self.lam1), float(self.lam2))
        return out[()] if out.ndim == 0 else out

    def variance(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        ts = self.t_switch
        before = np.minimum(b, ts) - np.minimum(a, ts)
        after = np.maximum(b, ts) - np.maximum(a, ts)
        return self.lam1**2 * before + self.lam2**2 * after


GainStrategy = OptimalGain | ConstantGain | PiecewiseGain


def gain_value(strategy: GainStrategy, t):
    """Feedback gain ``lambda(t)`` (non-negative, never above the clamp)."""
    return strategy.value(t)


def phase_variance(strategy: GainStrategy, a, b):
    """``int_a^b lambda(s)^2 ds`` in closed form."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(a_arr > b_arr):
        raise ValueError("phase_variance needs a <= b")
    out = np.asarray(strategy.variance(a_arr, b_arr), dtype=float)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class Homodyne:
    phi0: float = math.pi / 2


@dataclass(frozen=True)
class Heterodyne:
    delta: float = 400 * math.pi
    phi0: float = math.pi / 2


@dataclass(frozen=True)
class AdaptiveIntegral:
    strategy: GainStrategy
    tau: float = 0.0
    phi0: float = math.pi / 2

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"delay must be non-negative, got {self.tau!r}")


LoPhaseModel = Homodyne | Heterodyne | AdaptiveIntegral


def lo_phase_increment(model: LoPhaseModel, dw, t, dt: float):
    """Change of the LO phase over one step.

    ``dw`` is the record increment at time ``t`` (the caller has already
    applied the delay, so ``t`` is the delayed time).
    """
    if isinstance(model, Homodyne):
        return np.zeros_like(np.asarray(dw, dtype=float))
    if isinstance(model, Heterodyne):
        return np.full_like(np.asarray(dw, dtype=float), model.delta * dt)
    return model.strategy.value(t) * dw


def _floats(text: str, n: int) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return [float(p) for p in parts]


def parse_strategy(text: str, shape: ModeShape | None = None, clamp: float = DEFAULT_CLAMP) -> GainStrategy:
    """Parse ``opt``, ``const:<lam>`` or ``pw:<lam1>,<lam2>,<t_l>``."""
    name, _, arg = text.strip().partition(":")
    if name == "opt":
        if shape is None:
            raise ValueError("the optimal gain needs a mode shape")
        return OptimalGain(shape, clamp)
    if name == "const":
        return ConstantGain(*_floats(arg, 1), clamp=clamp)
    if name == "pw":
        return PiecewiseGain(*_floats(arg, 3), clamp=clamp)
    raise ValueError(f"unknown gain strategy {text!r}")


def parse_lo(text: str, shape: ModeShape | None = None, clamp: float = DEFAULT_CLAMP) -> LoPhaseModel:
    """Parse ``homodyne[:phi0]``, ``heterodyne[:delta]`` or ``adaptive:<strategy>[:tau=<tau>]``."""
    text = text.strip()
    name, _, rest = text.partition(":")
    if name == "homodyne":
        return Homodyne(float(rest)) if rest else Homodyne()
    if name == "heterodyne":
        return Heterodyne(float(rest)) if rest else Heterodyne()
    if name == "adaptive":
        tau = 0.0
        head, sep, tail = rest.rpartition(":tau=")
        if sep:
            rest, tau = head, float(tail)
        return AdaptiveIntegral(parse_strategy(rest, shape, clamp), tau)
    raise ValueError(f"unknown LO model {text!r}")


def describe_strategy(strategy: GainStrategy) -> str:
    if isinstance(strategy, OptimalGain):
        return "opt"
    if isinstance(strategy, ConstantGain):
        return f"const:{strategy.lam:.10g}"
    return f"pw:{strategy.lam1:.10g},{strategy.lam2:.10g},{strategy.t_switch:.10g}"


def describe_lo(model: LoPhaseModel) -> str:
    if isinstance(model, Homodyne):
        return f"homodyne:{model.phi0:.10g}"
    if isinstance(model, Heterodyne):
        return f"heterodyne:{model.delta:.10g}"
    return f"adaptive:{describe_strategy(model.strategy)}:tau={model.tau:.10g}"

