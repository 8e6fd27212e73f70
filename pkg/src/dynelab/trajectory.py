"""Monte Carlo simulation of the dyne measurement record.

Under ostensible (vacuum) statistics the photocurrent is white noise,
``J dt = dW``.  A trajectory accumulates

    R = sum_i exp(i Phi_i) sqrt(u(t_i)) dW_i

on a uniform Euler-Maruyama grid covering the effective support of the mode.
For the adaptive law the LO phase at step ``i`` is ``Phi0`` plus the gain
weighted record up to ``delay_steps`` steps earlier, exclusive.  Because the
phase is a linear functional of past noise, the whole record of a trajectory
is built with one cumulative sum shifted by the delay; this is the array form
of a ring buffer of the last ``delay_steps`` increments.

The record starts ``delay_steps`` steps before the support so that the phase
at the leading edge already carries the record from ``t - tau``, as in the
continuous-time law.  Those early increments drive the phase only.

Every trajectory draws from its own stream, seeded by
``SeedSequence(base_seed, spawn_key=(traj_index,))``, so results do not depend
on chunking or execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .feedback import AdaptiveIntegral, Heterodyne, Homodyne, LoPhaseModel
from .merit import approx_merit_from_m4
from .modeshape import SUPPORT_EPS, ModeShape

__all__ = [
    "SimulationConfig",
    "TrajectoryOutcome",
    "MeritEstimate",
    "ProtocolState",
    "delay_steps_for",
    "trajectory_rng",
    "simulate_trajectory",
    "simulate_outcomes",
    "estimate_merit",
    "merit_from_outcomes",
    "simulate_protocol",
]

DEFAULT_SEED = 20160512
# the clamped optimal gain of a box pulse gives lam^2 dt = 1/i exactly on the
# grid, so the threshold avoids reciprocals of integers; otherwise rounding
# would decide the gate there and break rescaling invariance
MILSTEIN_MAX_ANGLE_VAR = 0.045


@dataclass(frozen=True)
class SimulationConfig:
    """Time grid and ensemble settings.

    ``delay_steps`` left as ``None`` is derived from the delay of an adaptive
    LO model, which must then be an integer multiple of ``dt``.

    ``scheme="euler"`` is plain Euler-Maruyama.  ``"milstein"`` adds the
    Milstein term for zero-delay adaptive feedback, the only case where the
    LO phase responds to the increment just before the current one; every
    other model is integrated identically by both schemes.
    """

    dt: float = 1e-3
    n_traj: int = 10_000
    base_seed: int = DEFAULT_SEED
    delay_steps: int | None = None
    eps: float = SUPPORT_EPS
    scheme: str = "milstein"
    substeps: int = 1
    # rows x steps held in memory at once
    block: int = 2_000_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt!r}")
        if self.n_traj < 1:
            raise ValueError("need at least one trajectory")
        if self.delay_steps is not None and self.delay_steps < 0:
            raise ValueError("delay_steps must be non-negative")
        if self.substeps < 1:
            raise ValueError("substeps must be a positive integer")
        if self.scheme not in ("euler", "milstein"):
            raise ValueError(f"unknown scheme {self.scheme!r}; expected 'euler' or 'milstein'")


@dataclass(frozen=True)
class TrajectoryOutcome:
    R: complex
    phase_estimate: float
    final_phase: float


@dataclass(frozen=True)
class MeritEstimate:
    f_hat: float
    f_hat_se: float
    m2_hat: float
    m2_se: float
    m4_hat: float
    m4_se: float
    n_traj: int

    @property
    def f_tilde_hat(self) -> float:
        return approx_merit_from_m4(self.m4_hat)

    @property
    def f_tilde_se(self) -> float:
        return self.m4_se / 8.0


@dataclass(frozen=True)
class ProtocolState:
    """Ensemble-averaged, phase-corrected state of the second mode."""

    rho: np.ndarray
    stderr: np.ndarray
    n_traj: int


def delay_steps_for(tau: float, dt: float, rtol: float = 1e-9) -> int:
    """Number of steps in ``tau``; raises unless ``tau`` is a multiple of ``dt``."""
    n = round(tau / dt)
    if abs(n * dt - tau) > rtol * max(abs(tau), dt):
        raise ValueError(f"delay {tau!r} is not an integer multiple of dt={dt!r}")
    return int(n)


def _resolve_delay(lo: LoPhaseModel, cfg: SimulationConfig) -> int:
    if isinstance(lo, AdaptiveIntegral):
        derived = delay_steps_for(lo.tau, cfg.dt)
        if cfg.delay_steps is not None and cfg.delay_steps != derived:
            raise ValueError(f"delay_steps={cfg.delay_steps} disagrees with tau={lo.tau} at dt={cfg.dt}")
        return derived
    return cfg.delay_steps or 0


def _grid(shape: ModeShape, cfg: SimulationConfig):
    lo, hi = shape.effective_support(cfg.eps)
    n = math.ceil((hi - lo) / cfg.dt - 1e-9)
    t = lo + cfg.dt * np.arange(n)
    if t[-1] + cfg.dt < hi - 1e-9 * cfg.dt:
        raise ValueError("time grid does not cover the effective support")
    return t


def trajectory_rng(base_seed: int, traj_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(base_seed, spawn_key=(traj_index,))))


def _noise(indices, n_steps: int, base_seed: int, substeps: int = 1) -> np.ndarray:
    z = np.empty((len(indices), n_steps * substeps))
    for row, idx in enumerate(indices):
        trajectory_rng(base_seed, int(idx)).standard_normal(out=z[row])
    if substeps == 1:
        return z
    return z.reshape(len(indices), n_steps, substeps).sum(axis=2)


class _Record:
    """Per-grid quantities shared by every trajectory of one run."""

    def __init__(self, shape: ModeShape, lo: LoPhaseModel, cfg: SimulationConfig):
        self.lo = lo
        self.cfg = cfg
        self.t = _grid(shape, cfg)
        self.delay = _resolve_delay(lo, cfg)
        self.n_noise = self.t.size + self.delay
        self.sqrt_u = np.sqrt(shape.density(self.t))
        if isinstance(lo, AdaptiveIntegral):
            noise_times = self.t[0] + cfg.dt * (np.arange(self.n_noise) - self.delay)
            self.gain = lo.strategy.value(noise_times)
        else:
            self.gain = None
        if self.gain is not None:
            # the correction is a small-angle expansion of exp(i lam dW); it is
            # dropped on steps where lam^2 dt is not small (huge clamped gains)
            small = self.gain**2 * cfg.dt <= MILSTEIN_MAX_ANGLE_VAR
            self.milstein_gain = np.where(small, self.gain, 0.0)

    def phases(self, dw: np.ndarray) -> np.ndarray:
        lo = self.lo
        n = self.t.size
        if isinstance(lo, Homodyne):
            return np.full((dw.shape[0], n), lo.phi0)
        if isinstance(lo, Heterodyne):
            ramp = lo.phi0 + lo.delta * self.cfg.dt * np.arange(n)
            return np.broadcast_to(ramp, (dw.shape[0], n))
        fed = np.cumsum(self.gain * dw, axis=1)
        phi = np.empty((dw.shape[0], n))
        phi[:, 0] = 0.0
        phi[:, 1:] = fed[:, : n - 1]
        return lo.phi0 + phi

    @property
    def milstein(self) -> bool:
        # only zero-delay feedback makes the phase depend on the previous increment
        return self.cfg.scheme == "milstein" and self.gain is not None and self.delay == 0

    def run(self, indices) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        dw = math.sqrt(cfg.dt / cfg.substeps) * _noise(indices, self.n_noise, cfg.base_seed, cfg.substeps)
        phi = self.phases(dw)
        signal = self.sqrt_u * dw[:, self.delay :]
        c, s = np.cos(phi), np.sin(phi)
        if self.milstein:
            # d(e^{i Phi} sqrt(u))/dPhi * lambda * (dW^2 - dt) / 2
            corr = 0.5 * self.milstein_gain * self.sqrt_u * (dw * dw - self.cfg.dt)
            re = np.sum(c * signal - s * corr, axis=1)
            im = np.sum(s * signal + c * corr, axis=1)
        else:
            re = np.sum(c * signal, axis=1)
            im = np.sum(s * signal, axis=1)
        return re + 1j * im, phi[:, -1]


def _chunks(n_traj: int, n_steps: int, block: int):
    rows = max(1, block // max(n_steps, 1))
    for start in range(0, n_traj, rows):
        yield range(start, min(n_traj, start + rows))


def _wrap(angle):
    a = np.angle(angle)
    return np.where(a >= math.pi, -math.pi, a)


def simulate_trajectory(shape: ModeShape, lo: LoPhaseModel, cfg: SimulationConfig, traj_index: int) -> TrajectoryOutcome:
    """One trajectory of the ostensible record."""
    rec = _Record(shape, lo, cfg)
    r, last = rec.run([traj_index])
    return TrajectoryOutcome(complex(r[0]), float(_wrap(r[0])), float(last[0]))


def simulate_outcomes(shape: ModeShape, lo: LoPhaseModel, cfg: SimulationConfig, start: int = 0) -> np.ndarray:
    """Complex outcomes ``R`` of trajectories ``start .. start + n_traj - 1``."""
    rec = _Record(shape, lo, cfg)
    out = np.empty(cfg.n_traj, dtype=complex)
    for idx in _chunks(cfg.n_traj, rec.n_noise * cfg.substeps, cfg.block):
        out[idx.start : idx.stop] = rec.run([start + i for i in idx])[0]
    return out


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    mean = math.fsum(x) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def merit_from_outcomes(r: np.ndarray) -> MeritEstimate:
    """Moments of ``|R|`` with standard errors (compensated sums)."""
    mod = np.abs(np.asarray(r))
    m2 = mod**2
    f, f_se = _mean_se(mod)
    m2_hat, m2_se = _mean_se(m2)
    m4_hat, m4_se = _mean_se(m2**2)
    return MeritEstimate(f, f_se, m2_hat, m2_se, m4_hat, m4_se, mod.size)


def estimate_merit(shape: ModeShape, lo: LoPhaseModel, cfg: SimulationConfig) -> MeritEstimate:
    return merit_from_outcomes(simulate_outcomes(shape, lo, cfg))


def simulate_protocol(shape: ModeShape, lo: LoPhaseModel, cfg: SimulationConfig) -> ProtocolState:
    """Average phase-corrected conditional state of the second mode.

    Projecting the first mode of ``(|0>|1> - |1>|0>)/sqrt(2)`` on
    ``<0| + R* <1|`` leaves ``(|1> - R* |0>)/sqrt(2)``; the one-photon
    amplitude is then rotated by ``-arg(R) - pi``.
    """
    r = simulate_outcomes(shape, lo, cfg)
    c0 = -np.conj(r) / math.sqrt(2.0)
    c1 = np.exp(1j * (-np.angle(r) - math.pi)) / math.sqrt(2.0)
    amps = (c0, c1)
    rho = np.empty((2, 2), dtype=complex)
    se = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            term = amps[i] * np.conj(amps[j])
            re, re_se = _mean_se(term.real)
            im, im_se = _mean_se(term.imag)
            rho[i, j] = complex(re, im)
            se[i, j] = math.hypot(re_se, im_se)
    return ProtocolState(rho, se, r.size)
