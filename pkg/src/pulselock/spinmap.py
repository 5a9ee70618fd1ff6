"""Per-period affine maps on the electron Bloch vector and their fixed points.

Geometry: x along the magnetic field, z along the optical axis.  Bloch
vectors are plain ``(3,)`` arrays ``(Sx, Sy, Sz)`` with ``|S| <= 1/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pulse import PulseAction

COND_LIMIT = 1e12


class SingularMapError(ArithmeticError):
    """``I - A`` is (numerically) singular: no unique periodic steady state."""


@dataclass(frozen=True)
class AffineMap3:
    """The map ``S -> A @ S + b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float).reshape(3, 3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> AffineMap3:
        return cls(np.eye(3), np.zeros(3))

    def __call__(self, s) -> np.ndarray:
        return self.A @ np.asarray(s, dtype=float) + self.b


@dataclass(frozen=True)
class EvolutionParams:
    """Free precession about the field between pulses.

    omega is the angular precession frequency (rad/ps), T_R the repetition
    period, T2 the decay time of (Sy, Sz) and T1 that of Sx (all ps).
    """

    omega: float
    T_R: float
    T2: float
    T1: float | None = None

    def __post_init__(self):
        if self.T1 is None:
            object.__setattr__(self, "T1", self.T2)
        for name in ("T_R", "T2", "T1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


def compose(outer: AffineMap3, inner: AffineMap3) -> AffineMap3:
    """``outer ∘ inner``."""
    return AffineMap3(outer.A @ inner.A, outer.A @ inner.b + outer.b)


def pulse_bloch_map(a: PulseAction) -> AffineMap3:
    """Pulse as an affine map.

    The coherence ``Sx + iSy`` is multiplied by ``Q e^{iΦ}``; the excited
    spin-up population decays back split evenly between both spin states, so
    ``Sz -> (Q² - 1)/4 + (Q² + 1)/2 · Sz``.
    """
    # real amplitudes (resonant pulses) rotate by exactly 0 or π
    if a.phi == 0.0 or a.phi == math.pi:
        c, s = (1.0 if a.phi == 0.0 else -1.0), 0.0
    else:
        c, s = math.cos(a.phi), math.sin(a.phi)
    q = a.Q
    A = np.array([[q * c, -q * s, 0.0],
                  [q * s, q * c, 0.0],
                  [0.0, 0.0, 0.5 * (q * q + 1.0)]])
    return AffineMap3(A, np.array([0.0, 0.0, 0.25 * (q * q - 1.0)]))


def _free_matrices(theta, decay_t, decay_l):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    F = np.zeros(theta.shape + (3, 3))
    F[..., 0, 0] = decay_l
    F[..., 1, 1] = decay_t * c
    F[..., 1, 2] = -decay_t * s
    F[..., 2, 1] = decay_t * s
    F[..., 2, 2] = decay_t * c
    return F


def free_evolution_map(e: EvolutionParams, t: float) -> AffineMap3:
    """Right-handed rotation of (Sy, Sz) about +x by ωt with T2/T1 damping."""
    if t < 0:
        raise ValueError("free evolution time must be >= 0")
    F = _free_matrices(e.omega * t, math.exp(-t / e.T2), math.exp(-t / e.T1))
    return AffineMap3(F, np.zeros(3))


def period_map(a: PulseAction, e: EvolutionParams) -> AffineMap3:
    """Map from just after one pulse to just after the next."""
    return compose(pulse_bloch_map(a), free_evolution_map(e, e.T_R))


def steady_state(m: AffineMap3, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Unique fixed point ``(I - A)^{-1} b`` of a contractive map."""
    M = np.eye(3) - m.A
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMapError(f"I - A is singular (cond = {cond:.3g})")
    return np.linalg.solve(M, m.b)


def steady_states(a: PulseAction, omegas, T_R: float, T2: float, T1: float | None = None,
                  cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Post-pulse steady states for many precession frequencies at once.

    Returns an ``(n, 3)`` array; equivalent to calling `steady_state` on
    `period_map` for each frequency.
    """
    T1 = T2 if T1 is None else T1
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    P = pulse_bloch_map(a)
    F = _free_matrices(omegas * T_R, math.exp(-T_R / T2), math.exp(-T_R / T1))
    M = np.eye(3) - P.A @ F
    with np.errstate(all="ignore"):
        try:
            Minv = np.linalg.inv(M)
        except np.linalg.LinAlgError as exc:
            raise SingularMapError("I - A is singular") from exc
    cond = np.abs(M).sum(axis=-2).max(axis=-1) * np.abs(Minv).sum(axis=-2).max(axis=-1)
    if not np.all(np.isfinite(cond)) or np.any(cond > cond_limit):
        raise SingularMapError(f"I - A is singular (cond = {np.nanmax(cond):.3g})")
    return Minv @ P.b


def iterate_map(m: AffineMap3, s0, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("k must be >= 0")
    s = np.asarray(s0, dtype=float).copy()
    for _ in range(k):
        s = m.A @ s + m.b
    return s


def spin_trajectory(s_post, e: EvolutionParams, times) -> np.ndarray:
    """Spin at each time offset after a pulse; rows are (Sx, Sy, Sz).

    Negative pump-probe delays correspond to ``T_R + t_neg``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(times >= e.T_R):
        raise ValueError("trajectory times must lie in [0, T_R)")
    s = np.asarray(s_post, dtype=float)
    F = _free_matrices(e.omega * times, np.exp(-times / e.T2), np.exp(-times / e.T1))
    return F @ s


def nearest_psc(omega: float, T_R: float) -> tuple[int, float]:
    """Nearest phase-synchronized frequency ``2πN/T_R`` (ties go to even N)."""
    if not omega > 0:
        raise ValueError("omega must be > 0")
    n = int(round(omega * T_R / (2.0 * math.pi)))
    return n, 2.0 * math.pi * n / T_R
