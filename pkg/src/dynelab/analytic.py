"""Deterministic evaluation of the approximate figure of merit.

The approximate merit of an integral-feedback dyne measurement with delay
``tau`` is

    F~ = 1 - int dt int_{s<t} ds u_t u_s (1 + exp(-2 V(s-tau, t-tau))) / 4
           + int dt int_{s<=t-tau} ds lam_s lam_v u_t sqrt(u_s u_v)
                 * exp(-2 V(s-tau, t-tau)) * exp(-V(v-tau, s-tau) / 2)
                 * [2 over v in (s-tau, s), 1 over v < s-tau] dv

where ``V(a, b) = int_a^b lam^2`` is the phase variance of the gain.  Two
independent quadrature routes evaluate it:

* :func:`merit_quadrature_zero_delay` nests the three integrals literally
  (outer ``t``, then ``s``, then ``v``); it only handles ``tau = 0``.
* :func:`merit_quadrature_delay` reorders the integrals around the middle
  time ``s`` so that the ``t`` and ``v`` integrals factorize, which makes the
  cost quadratic rather than cubic in the node count.

:func:`merit_closed_form_constant` gives exact expressions for constant gain.
"""

from __future__ import annotations

import decimal
import enum
import math
from dataclasses import dataclass

import numpy as np

from .feedback import ConstantGain, GainStrategy
from .modeshape import SUPPORT_EPS, ModeShape, ShapeKind
from .quadrature import PanelRule, batch_rule, fixed_rule

__all__ = [
    "QuadratureConfig",
    "Method",
    "AnalyticMerit",
    "ToleranceNotMet",
    "ClosedFormOutOfRange",
    "merit_quadrature_zero_delay",
    "merit_quadrature_delay",
    "delay_merit_at_rule",
    "merit_closed_form_constant",
    "closed_form_available",
]


class ToleranceNotMet(RuntimeError):
    """Refinement stopped before the requested tolerance was reached."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class ClosedFormOutOfRange(ValueError):
    """The constant-gain closed form does not cover the requested delay."""


class Method(str, enum.Enum):
    QUAD_ZERO_DELAY = "quad0"
    QUAD_DELAY = "quad"
    CLOSED_FORM = "closed"


@dataclass(frozen=True)
class QuadratureConfig:
    """Panel rule and refinement controls.

    ``rule`` is the starting rule (``None`` picks a default suited to the
    route); each refinement adds nodes per panel and a grading level.  The returned error estimate is the
    change between the last two levels.
    """

    rule: PanelRule | None = None
    eps: float = SUPPORT_EPS
    tol: float = 1e-6
    max_refinements: int = 3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_refinements < 1:
            raise ValueError("at least one refinement is needed for an error estimate")


@dataclass(frozen=True)
class AnalyticMerit:
    f_tilde: float
    error_estimate: float
    method: Method


_ZERO_DELAY_RULE = PanelRule(nodes=8, levels=5, middle=4)
_DELAY_RULE = PanelRule(nodes=8, levels=6, middle=4)


def _refine(evaluate, cfg: QuadratureConfig, method: Method, default: PanelRule) -> AnalyticMerit:
    rule = cfg.rule or default
    prev = evaluate(rule)
    for step in range(cfg.max_refinements):
        rule = rule.refined()
        cur = evaluate(rule)
        err = abs(cur - prev)
        if err < cfg.tol:
            return AnalyticMerit(cur, err, method)
        prev = cur
    raise ToleranceNotMet(
        f"quadrature did not reach tol={cfg.tol:g} (last change {err:.3g})",
        AnalyticMerit(cur, err, method),
    )


def _breaks(shape: ModeShape, strategy: GainStrategy, shifts):
    pts = [*shape.breakpoints, *strategy.breakpoints]
    return sorted({p + j for p in pts for j in shifts})


def merit_quadrature_zero_delay(shape: ModeShape, strategy: GainStrategy, cfg: QuadratureConfig = QuadratureConfig()):
    """Zero-delay merit by literal triple nesting (cubic cost)."""
    lo, hi = shape.effective_support(cfg.eps)
    # sqrt(u)-weighted integrals need the support cut at eps**2
    lo_v = shape.effective_support(cfg.eps**2)[0]
    breaks = _breaks(shape, strategy, (0.0,))
    var = strategy.variance

    def evaluate(rule: PanelRule) -> float:
        t, wt = fixed_rule(lo, hi, breaks, rule)
        ut = shape.density(t)
        keep = ut > 0
        t, wt, ut = t[keep], wt[keep], ut[keep]
        pair = 0.0
        triple = 0.0
        # chunk over t to bound memory (rows x s-nodes x v-nodes)
        n_s = len(rule.unit()[0]) * (len(breaks) + 1)
        chunk = max(1, int(4e6 // max(n_s * n_s, 1)))
        for i in range(0, t.size, chunk):
            tc, wc, uc = t[i : i + chunk], wt[i : i + chunk], ut[i : i + chunk]
            s, ws = batch_rule(np.full(tc.shape, lo_v), tc, breaks, rule)
            us = shape.density(s)
            decay = np.exp(-2.0 * var(s, tc[:, None]))
            pair += np.sum(wc * uc * np.sum(ws * us * decay, axis=1))
            ls = strategy.value(s) * np.sqrt(us)
            flat = s.ravel()
            v, wv = batch_rule(np.full(flat.shape, lo_v), flat, breaks, rule)
            inner = np.sum(wv * strategy.value(v) * np.sqrt(shape.density(v)) * np.exp(-0.5 * var(v, flat[:, None])), axis=1)
            inner = inner.reshape(s.shape)
            triple += np.sum(wc * uc * np.sum(ws * ls * decay * inner, axis=1))
        return 7.0 / 8.0 - 0.25 * pair + triple

    return _refine(evaluate, cfg, Method.QUAD_ZERO_DELAY, _ZERO_DELAY_RULE)


def merit_quadrature_delay(shape: ModeShape, strategy: GainStrategy, tau: float, cfg: QuadratureConfig = QuadratureConfig()):
    """Merit for feedback delayed by ``tau`` (quadratic cost)."""
    return _refine(_delay_evaluator(shape, strategy, tau, cfg.eps), cfg, Method.QUAD_DELAY, _DELAY_RULE)


def delay_merit_at_rule(shape: ModeShape, strategy: GainStrategy, tau: float, rule: PanelRule | None = None, eps: float = SUPPORT_EPS) -> float:
    """Delay quadrature at one fixed rule, without refinement or error estimate.

    About a third of the cost of :func:`merit_quadrature_delay`; meant for
    inner loops whose final answer is re-evaluated with refinement.
    """
    return _delay_evaluator(shape, strategy, tau, eps)(rule or _DELAY_RULE)


def _delay_evaluator(shape: ModeShape, strategy: GainStrategy, tau: float, eps: float):
    if not tau >= 0:
        raise ValueError(f"delay must be non-negative, got {tau!r}")
    tau = float(tau)
    lo, hi = shape.effective_support(eps)
    lo_v = shape.effective_support(eps**2)[0]
    gain_breaks = list(strategy.breakpoints)
    shape_breaks = list(shape.breakpoints)
    outer_breaks = _breaks(shape, strategy, (-tau, 0.0, tau, 2 * tau))
    t_breaks = sorted({*shape_breaks, *(g + tau for g in gain_breaks)})
    v_breaks = sorted({*shape_breaks, *gain_breaks, *(g + tau for g in gain_breaks)})
    var = strategy.variance

    def evaluate(rule: PanelRule) -> float:
        s, ws = fixed_rule(lo, hi, outer_breaks, rule)
        us = shape.density(s)
        keep = us > 0
        s, ws, us = s[keep], ws[keep], us[keep]
        # partner integrals over the later time t
        t, wt = batch_rule(s, np.full(s.shape, hi), t_breaks, rule)
        pair = np.sum(ws * us * np.sum(wt * shape.density(t) * np.exp(-2.0 * var(s[:, None] - tau, t - tau)), axis=1))

        late = s + tau <= hi
        s2, ws2, us2 = s[late], ws[late], us[late]
        t, wt = batch_rule(s2 + tau, np.full(s2.shape, hi), t_breaks, rule)
        h = np.sum(wt * shape.density(t) * np.exp(-2.0 * var(s2[:, None] - tau, t - tau)), axis=1)

        def g(a, b):
            v, wv = batch_rule(a, b, v_breaks, rule)
            f = strategy.value(v) * np.sqrt(shape.density(v)) * np.exp(-0.5 * var(v - tau, s2[:, None] - tau))
            return np.sum(wv * f, axis=1)

        near_lo = np.maximum(s2 - tau, lo_v)
        g_far = g(np.full(s2.shape, lo_v), near_lo)
        g_near = g(near_lo, s2) if tau > 0 else 0.0
        triple = np.sum(ws2 * strategy.value(s2) * np.sqrt(us2) * h * (2.0 * g_near + g_far))
        return 7.0 / 8.0 - 0.25 * pair + triple

    return evaluate


def _rise(k, c, tau):
    num = c * c + 2 * c * k + k * k - 8 * c * k * math.exp(-(k + 2 * c) * tau) + 4 * c * k * math.exp(-(3 * k + 5 * c) * tau / 2)
    return 1.0 - num / (4.0 * (k * k + 3 * k * c + 2 * c * c))


def _fall(k, c, tau):
    num = c * c + 4 * c * k + 3 * k * k - 8 * c * k * math.exp(-(k + 2 * c) * tau) + 4 * c * k * math.exp(-5 * (k + c) * tau / 2)
    return 1.0 - num / (4.0 * (3 * k * k + 7 * k * c + 2 * c * c))


def _bilat(k, c, tau):
    den = 8 * (k + 2 * c) ** 2 * (3 * k * k + 4 * k * c + c * c)
    num = (
        6 * k**4 + 23 * k**3 * c + 34 * k * k * c * c + 21 * k * c**3 + 4 * c**4
        - 2 * k * c * (k * k + 3 * k * c + 2 * c * c) * math.exp(-2.5 * tau * (k + c))
        - 8 * k * c * (3 * k**3 * tau + 7 * k * k * (c * tau + 1) + 2 * k * c * (c * tau + 5) + 2 * c * c) * math.exp(-tau * (k + 2 * c))
        + 2 * k * c * (3 * k + c) * (2 * k * k * tau + k * (4 * c * tau + 5) + 6 * c) * math.exp(-0.5 * tau * (3 * k + 5 * c))
    )
    return 1.0 - num / den


def _rect(T, c, tau):
    if not tau < T / 2:
        raise ClosedFormOutOfRange(f"rectangular closed form needs tau < T/2, got tau={tau!r}, T={T!r}")
    # the expression below is for T = 1; a general T is reduced by rescaling time.
    # Its terms grow like 1/c**2 and cancel for small c, so it is evaluated in
    # decimal arithmetic with enough digits to absorb the cancellation.
    prec = 40 + 2 * max(0, math.ceil(-math.log10(c * T)))
    with decimal.localcontext() as ctx:
        ctx.prec = prec
        D = decimal.Decimal
        c, tau = D(c) * D(T), D(tau) / D(T)
        c2 = c * c
        f = (
            1
            - (2 * (1 + 1 / c) + ((-2 * c).exp() - 1) / c2) / 16
            - (-2 * c * tau).exp() * (5 - 2 * c + 2 * c * tau) / c2
            - (2 * (-2 * c).exp() - (-2 * c + D("1.5") * c * tau).exp()) / (6 * c2)
            + 8 * (-(c + 3 * c * tau) / 2).exp() / (3 * c2)
            + (D("-2.5") * c * tau).exp() * (5 - 2 * c + 4 * c * tau) / (2 * c2)
        )
        return float(f)


_CLOSED = {
    ShapeKind.RISEEXP: _rise,
    ShapeKind.FALLEXP: _fall,
    ShapeKind.BILAT: _bilat,
    ShapeKind.RECT: _rect,
}


def closed_form_available(shape: ModeShape, strategy: GainStrategy, tau: float) -> bool:
    """Whether :func:`merit_closed_form_constant` covers this case."""
    if not isinstance(strategy, ConstantGain) or strategy.lam <= 0:
        return False
    if shape.kind is ShapeKind.RECT:
        return tau < shape.rate / 2
    return True


def merit_closed_form_constant(shape: ModeShape, lam: float, tau: float = 0.0) -> AnalyticMerit:
    """Exact merit for a constant gain ``lam > 0`` and delay ``tau``.

    Raises
    ------
    ClosedFormOutOfRange
        For the rectangular mode when ``tau >= T / 2``.
    """
    if not lam > 0:
        raise ValueError(f"closed form needs a positive gain, got {lam!r}")
    if not tau >= 0:
        raise ValueError(f"delay must be non-negative, got {tau!r}")
    value = _CLOSED[shape.kind](shape.rate, lam * lam, float(tau))
    return AnalyticMerit(value, 0.0, Method.CLOSED_FORM)
