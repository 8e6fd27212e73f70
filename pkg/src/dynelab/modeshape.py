"""Temporal mode-shapes of the single-photon wave packet.

Four shapes are supported, each with a closed-form density ``u(t)``,
cumulative ``U(t)`` and characteristic width ``w = 1 / int u^2 dt``:

=============  ==========================  =============  =====
kind           density                     support        width
=============  ==========================  =============  =====
rect           1/T                         [0, T)         T
bilat          (kappa/2) exp(-kappa |t|)   R              4/kappa
fallexp        k exp(-k t)                 [0, inf)       2/k
riseexp        k exp(k t)                  (-inf, 0]      2/k
=============  ==========================  =============  =====

``normalized(kind)`` picks the rate that gives ``w = 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShapeKind",
    "ModeShape",
    "density",
    "cumulative",
    "characteristic_width",
    "normalized",
    "effective_support",
    "quantile",
    "parse_shape",
    "SUPPORT_EPS",
]

SUPPORT_EPS = 1e-10


class ShapeKind(str, enum.Enum):
    RECT = "rect"
    BILAT = "bilat"
    FALLEXP = "fallexp"
    RISEEXP = "riseexp"


# rate that makes the characteristic width equal to one
_NORMALIZED_RATE = {
    ShapeKind.RECT: 1.0,
    ShapeKind.BILAT: 4.0,
    ShapeKind.FALLEXP: 2.0,
    ShapeKind.RISEEXP: 2.0,
}

_RATE_NAMES = {
    ShapeKind.RECT: ("T",),
    ShapeKind.BILAT: ("kappa", "k"),
    ShapeKind.FALLEXP: ("k",),
    ShapeKind.RISEEXP: ("k",),
}


@dataclass(frozen=True)
class ModeShape:
    """A normalized, non-negative temporal mode.

    Parameters
    ----------
    kind : ShapeKind
    rate : float
        Duration ``T`` for ``rect``, ``kappa`` for ``bilat`` and ``k`` for the
        unilateral exponentials.
    """

    kind: ShapeKind
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"shape rate must be positive and finite, got {self.rate!r}")

    @property
    def support(self) -> tuple[float, float]:
        """Exact support as a ``(lo, hi)`` pair, possibly infinite."""
        if self.kind is ShapeKind.RECT:
            return 0.0, self.rate
        if self.kind is ShapeKind.BILAT:
            return -math.inf, math.inf
        if self.kind is ShapeKind.FALLEXP:
            return 0.0, math.inf
        return -math.inf, 0.0

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the density (or its derivative) is discontinuous."""
        if self.kind is ShapeKind.RECT:
            return 0.0, self.rate
        return (0.0,)

    def rescaled(self, a: float) -> ModeShape:
        """Shape with density ``u(t/a)/a``."""
        if self.kind is ShapeKind.RECT:
            return ModeShape(self.kind, self.rate * a)
        return ModeShape(self.kind, self.rate / a)

    def density(self, t):
        return density(self, t)

    def cumulative(self, t):
        return cumulative(self, t)

    def log_cumulative(self, t):
        """``log U(t)``; ``-inf`` where ``U`` vanishes."""
        t = np.asarray(t, dtype=float)
        r = self.rate
        with np.errstate(divide="ignore"):
            if self.kind is ShapeKind.RECT:
                out = np.log(np.clip(t / r, 0.0, 1.0))
            elif self.kind is ShapeKind.BILAT:
                out = np.where(
                    t <= 0,
                    math.log(0.5) + r * np.minimum(t, 0.0),
                    np.log1p(-0.5 * np.exp(-r * np.maximum(t, 0.0))),
                )
            elif self.kind is ShapeKind.FALLEXP:
                out = np.where(t <= 0, -np.inf, np.log(-np.expm1(-r * np.maximum(t, 0.0))))
            else:
                out = r * np.minimum(t, 0.0)
        return out[()] if out.ndim == 0 else out

    def width(self) -> float:
        return characteristic_width(self)

    def effective_support(self, eps: float = SUPPORT_EPS) -> tuple[float, float]:
        return effective_support(self, eps)

    def quantile(self, q: float) -> float:
        return quantile(self, q)

    def __str__(self):
        return f"{self.kind.value}:{_RATE_NAMES[self.kind][0]}={self.rate:g}"


def density(shape: ModeShape, t):
    """Mode density ``u(t)``, exactly zero outside the support."""
    t = np.asarray(t, dtype=float)
    r = shape.rate
    if shape.kind is ShapeKind.RECT:
        out = np.where((t >= 0) & (t < r), 1.0 / r, 0.0)
    elif shape.kind is ShapeKind.BILAT:
        out = 0.5 * r * np.exp(-r * np.abs(t))
    elif shape.kind is ShapeKind.FALLEXP:
        out = np.where(t >= 0, r * np.exp(-r * np.maximum(t, 0.0)), 0.0)
    else:
        out = np.where(t <= 0, r * np.exp(r * np.minimum(t, 0.0)), 0.0)
    return out[()] if out.ndim == 0 else out


def cumulative(shape: ModeShape, t):
    """``U(t) = int_{-inf}^t u(s) ds`` in closed form."""
    t = np.asarray(t, dtype=float)
    r = shape.rate
    if shape.kind is ShapeKind.RECT:
        out = np.clip(t / r, 0.0, 1.0)
    elif shape.kind is ShapeKind.BILAT:
        e = np.exp(-r * np.abs(t))
        out = np.where(t <= 0, 0.5 * e, 1.0 - 0.5 * e)
    elif shape.kind is ShapeKind.FALLEXP:
        out = np.where(t <= 0, 0.0, -np.expm1(-r * np.maximum(t, 0.0)))
    else:
        out = np.exp(r * np.minimum(t, 0.0))
    return out[()] if out.ndim == 0 else out


def characteristic_width(shape: ModeShape) -> float:
    """``[int u(t)^2 dt]^{-1}``."""
    if shape.kind is ShapeKind.RECT:
        return shape.rate
    if shape.kind is ShapeKind.BILAT:
        return 4.0 / shape.rate
    return 2.0 / shape.rate


def normalized(kind) -> ModeShape:
    """Shape of the given kind with unit characteristic width."""
    kind = ShapeKind(kind)
    return ModeShape(kind, _NORMALIZED_RATE[kind])


def effective_support(shape: ModeShape, eps: float = SUPPORT_EPS) -> tuple[float, float]:
    """Window where ``eps <= U(t) <= 1 - eps`` (the exact support when compact)."""
    r = shape.rate
    if shape.kind is ShapeKind.RECT:
        return 0.0, r
    if shape.kind is ShapeKind.BILAT:
        edge = -math.log(2.0 * eps) / r
        return -edge, edge
    edge = -math.log(eps) / r
    if shape.kind is ShapeKind.FALLEXP:
        return 0.0, edge
    return -edge, 0.0


def quantile(shape: ModeShape, q: float) -> float:
    """Arrival time by which the fraction ``q`` of the photon has arrived, ``U^{-1}(q)``."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q!r}")
    r = shape.rate
    if shape.kind is ShapeKind.RECT:
        return q * r
    if shape.kind is ShapeKind.BILAT:
        return math.log(2.0 * q) / r if q <= 0.5 else -math.log(2.0 * (1.0 - q)) / r
    if shape.kind is ShapeKind.FALLEXP:
        return -math.log1p(-q) / r
    return math.log(q) / r


_ALIASES = {
    "rect": ShapeKind.RECT,
    "rectangular": ShapeKind.RECT,
    "bilat": ShapeKind.BILAT,
    "bilateral": ShapeKind.BILAT,
    "fallexp": ShapeKind.FALLEXP,
    "falling": ShapeKind.FALLEXP,
    "riseexp": ShapeKind.RISEEXP,
    "rising": ShapeKind.RISEEXP,
}


def parse_shape(text: str) -> ModeShape:
    """Parse ``rect``, ``bilat:kappa=4``, ``rect:T=2`` ... into a shape.

    Without an override the normalized (unit-width) rate is used.
    """
    name, _, rest = text.strip().partition(":")
    try:
        kind = _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; expected one of rect, bilat, fallexp, riseexp") from None
    if not rest:
        return normalized(kind)
    key, eq, value = rest.partition("=")
    if not eq or key not in _RATE_NAMES[kind]:
        raise ValueError(f"bad rate override {rest!r} for shape {kind.value}")
    return ModeShape(kind, float(value))
