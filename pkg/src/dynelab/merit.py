"""Figures of merit for how close a dyne measurement is to canonical.

``F = <|R|>`` over the ostensible distribution equals one exactly for a
canonical phase measurement.  Its second-order expansion about ``|R| = 1``,
using ``<|R|^2> = 1``, is ``F~ = (9 - <|R|^4>) / 8``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QubitMetrics",
    "homodyne_exact",
    "heterodyne_exact",
    "approx_merit_from_m4",
    "qubit_metrics",
    "Table1Row",
    "table1",
]


def homodyne_exact() -> float:
    """``<|X|>`` for a standard normal ``X``: ``sqrt(2/pi)``."""
    return math.sqrt(2.0 / math.pi)


def heterodyne_exact() -> float:
    """``<|A|>`` for a circular complex normal with ``<|A|^2> = 1``: ``sqrt(pi)/2``."""
    return math.sqrt(math.pi) / 2.0


def approx_merit_from_m4(m4):
    """``(9 - m4) / 8``, deliberately left unclipped."""
    return (9.0 - m4) / 8.0


@dataclass(frozen=True)
class QubitMetrics:
    f: float
    fidelity: float
    purity: float
    rho2: np.ndarray


def qubit_metrics(f: float) -> QubitMetrics:
    """Prepared 50:50 qubit state for a measurement of merit ``f``."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"figure of merit must lie in [0, 1], got {f!r}")
    rho = 0.5 * np.array([[1.0, f], [f, 1.0]], dtype=complex)
    return QubitMetrics(f, (1.0 + f) / 2.0, (1.0 + f * f) / 2.0, rho)


@dataclass(frozen=True)
class Table1Row:
    measurement: str
    exact: float
    approx: float


def table1() -> list[Table1Row]:
    """Exact and approximate merits of the three reference measurements."""
    return [
        Table1Row("homodyne", homodyne_exact(), approx_merit_from_m4(3.0)),
        Table1Row("heterodyne", heterodyne_exact(), approx_merit_from_m4(2.0)),
        Table1Row("adaptive", 1.0, approx_merit_from_m4(1.0)),
    ]
