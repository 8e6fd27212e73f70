"""Vectorized composite Gauss-Legendre rules on graded panels.

A 1-D rule is built for a batch of intervals ``[a_i, b_i]`` at once.  Each
interval is cut at a fixed set of breakpoints (clipped into the interval, so
every row has the same number of segments) and every segment is split into
panels that shrink geometrically towards both segment ends.  That resolves
exponential boundary layers of any width down to the smallest panel, as well
as the integrable ``t^{-1/2}`` singularities of the optimal gain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["PanelRule", "graded_edges", "batch_rule", "fixed_rule"]


@lru_cache(maxsize=None)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    # map from [-1, 1] to [0, 1]
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def graded_edges(levels: int, middle: int, ratio: float = 0.25) -> np.ndarray:
    """Panel edges on ``[0, 1]``, graded geometrically towards both ends."""
    half = [0.5 * ratio**j for j in range(levels, 0, -1)]
    inner_lo = half[-1] if half else 0.0
    mid = np.linspace(inner_lo, 1.0 - inner_lo, middle + 1)
    edges = np.concatenate([[0.0], half, mid[1:-1], [1.0 - h for h in reversed(half)], [1.0]])
    if not half:
        edges = np.linspace(0.0, 1.0, middle + 1)
    edges = np.unique(edges)
    edges.setflags(write=False)
    return edges


@dataclass(frozen=True)
class PanelRule:
    """Shape parameters of the composite rule."""

    nodes: int = 8
    levels: int = 6
    middle: int = 4
    ratio: float = 0.25

    def unit(self):
        """Nodes and weights of the composite rule on ``[0, 1]``."""
        return _unit_rule(self.nodes, self.levels, self.middle, self.ratio)

    def refined(self, step: int = 1) -> PanelRule:
        return PanelRule(self.nodes + 4 * step, self.levels + step, self.middle, self.ratio)


@lru_cache(maxsize=None)
def _unit_rule(nodes, levels, middle, ratio):
    edges = graded_edges(levels, middle, ratio)
    gx, gw = _leggauss(nodes)
    h = np.diff(edges)
    x = (edges[:-1, None] + h[:, None] * gx[None, :]).ravel()
    w = (h[:, None] * gw[None, :]).ravel()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def batch_rule(a, b, breaks, rule: PanelRule):
    """Nodes and weights for the intervals ``[a_i, b_i]``.

    Parameters
    ----------
    a, b : array_like, shape (M,)
        Interval ends, ``a <= b`` elementwise (empty intervals are allowed and
        get zero weights).
    breaks : sequence of float
        Points where the integrand may have a kink or jump.

    Returns
    -------
    x, w : ndarray, shape (M, K)
    """
    a = np.asarray(a, dtype=float)
    b = np.maximum(np.asarray(b, dtype=float), a)
    bp = np.asarray(sorted(set(breaks)), dtype=float)
    if bp.size:
        lo, hi = np.min(a), np.max(b)
        bp = bp[(bp > lo) & (bp < hi)]
    edges = np.concatenate([a[:, None], np.clip(bp[None, :], a[:, None], b[:, None]), b[:, None]], axis=1)
    seg = np.diff(edges, axis=1)
    ux, uw = rule.unit()
    x = edges[:, :-1, None] + seg[:, :, None] * ux[None, None, :]
    w = seg[:, :, None] * uw[None, None, :]
    m = a.shape[0]
    return x.reshape(m, -1), w.reshape(m, -1)


def fixed_rule(a: float, b: float, breaks, rule: PanelRule):
    """Composite rule on a single interval, dropping empty segments."""
    pts = sorted({a, b, *[p for p in breaks if a < p < b]})
    ux, uw = rule.unit()
    xs, ws = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            xs.append(lo + (hi - lo) * ux)
            ws.append((hi - lo) * uw)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)
