"""Single-pulse action on the electron-trion transition.

Only the spin-up ground state couples to the trion for σ+ light, so one pulse
is fully described by the fate of that amplitude: it survives with magnitude
Q and picks up a phase, or is transferred to the trion with probability W.

Sign convention
---------------
``detuning`` is the pulse carrier minus the transition frequency.  The phase
Φ is the angle by which the transverse spin (Sx + iSy) is rotated about the
optical axis, i.e. minus the phase of the surviving spin-up amplitude in the
frame rotating with the carrier.  With this choice Φ > 0 for δ > 0, and Φ is
odd in δ while Q and W are even.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from .gammafn import log_gamma_complex

Shape = Literal["sech", "square"]


class IntegrationError(RuntimeError):
    """The ODE oracle could not meet its tolerance."""


@dataclass(frozen=True)
class PulseParams:
    """Optical pulse driving the spin-up/trion transition.

    Parameters
    ----------
    shape : {"sech", "square"}
    area : float
        Time-integrated Rabi angle Θ (rad).
    detuning : float
        Carrier minus transition frequency δ (rad/ps).
    bandwidth : float, optional
        Envelope rate σ (1/ps) of ``Ω0·sech(σt)``; required for sech pulses.
    duration : float, optional
        Length T (ps) of a square pulse.
    """

    shape: Shape
    area: float
    detuning: float = 0.0
    bandwidth: float | None = None
    duration: float | None = None

    def __post_init__(self):
        if self.shape not in ("sech", "square"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if not self.area >= 0.0:
            raise ValueError("pulse area must be >= 0")
        if not math.isfinite(self.detuning):
            raise ValueError("detuning must be finite")
        if self.shape == "sech" and not (self.bandwidth is not None and self.bandwidth > 0):
            raise ValueError("sech pulse needs bandwidth > 0")
        if self.shape == "square" and not (self.duration is not None and self.duration > 0):
            raise ValueError("square pulse needs duration > 0")

    @classmethod
    def sech(cls, area, detuning, bandwidth):
        return cls("sech", float(area), float(detuning), bandwidth=float(bandwidth))

    @classmethod
    def square(cls, area, detuning, duration):
        return cls("square", float(area), float(detuning), duration=float(duration))

    @property
    def peak_rabi(self) -> float:
        if self.shape == "sech":
            return self.area * self.bandwidth / math.pi
        return self.area / self.duration

    def rabi(self, t):
        """Rabi frequency envelope Ω(t); sech pulses centred at 0, square on [0, T]."""
        t = np.asarray(t, dtype=float)
        if self.shape == "sech":
            return self.peak_rabi / np.cosh(self.bandwidth * t)
        return np.where((t >= 0) & (t <= self.duration), self.peak_rabi, 0.0)


@dataclass(frozen=True)
class PulseAction:
    """Retention Q, rotation phase Φ and transition probability W of one pulse."""

    Q: float
    phi: float
    W: float

    @classmethod
    def from_amplitude(cls, a: complex) -> PulseAction:
        q = abs(a)
        # W from Q keeps W + Q^2 = 1 at machine precision
        return cls(Q=q, phi=_wrap(cmath.phase(a)) if q > 0 else 0.0, W=max(0.0, 1.0 - q * q))

    @property
    def amplitude(self) -> complex:
        return self.Q * cmath.exp(1j * self.phi)


def _wrap(phi: float) -> float:
    # (-pi, pi]
    phi = math.remainder(phi, 2.0 * math.pi)
    return math.pi if phi == -math.pi else phi


def sech_pulse_action(p: PulseParams) -> PulseAction:
    """Rosen-Zener solution for ``Ω(t) = Ω0 sech(σt)``.

    With α = Θ/2π and β = δ/2σ the surviving amplitude is
    ``Γ(1/2+iβ)² / [Γ(1/2+iβ+α) Γ(1/2+iβ-α)]``, giving
    ``W = sin²(Θ/2) sech²(πδ/2σ)``.
    """
    if p.shape != "sech":
        raise ValueError("sech_pulse_action needs a sech pulse")
    alpha = p.area / (2.0 * math.pi)
    beta = p.detuning / (2.0 * p.bandwidth)
    z = complex(0.5, beta)
    # 1/Γ(z - α) vanishes at the poles: resonant pulses of area π, 3π, ...
    zm = z - alpha
    if beta == 0.0 and zm.real <= 0.0 and zm.real == math.floor(zm.real):
        return PulseAction(Q=0.0, phi=0.0, W=1.0)
    log_a = 2.0 * log_gamma_complex(z) - log_gamma_complex(z + alpha) - log_gamma_complex(zm)
    return PulseAction.from_amplitude(cmath.exp(log_a))


def square_pulse_action(p: PulseParams) -> PulseAction:
    """Rabi solution for a constant envelope of duration T.

    The generalized frequency is Λ = √(Ω0² + δ²).  The amplitude is taken
    relative to the undriven spin-down state, which carries the phase
    factor ``exp(-iδT/2)`` in addition to ``cos(ΛT/2) + i(δ/Λ) sin(ΛT/2)``.
    """
    if p.shape != "square":
        raise ValueError("square_pulse_action needs a square pulse")
    T = p.duration
    om = p.peak_rabi
    lam = math.hypot(om, p.detuning)
    if lam == 0.0:
        return PulseAction(Q=1.0, phi=0.0, W=0.0)
    half = 0.5 * lam * T
    a = cmath.exp(-0.5j * p.detuning * T) * complex(math.cos(half), p.detuning / lam * math.sin(half))
    return PulseAction.from_amplitude(a)


def pulse_action(p: PulseParams) -> PulseAction:
    if p.shape == "sech":
        return sech_pulse_action(p)
    return square_pulse_action(p)


def ode_pulse_oracle(p: PulseParams, rtol: float = 1e-12, atol: float = 1e-13,
                     window: float = 20.0) -> PulseAction:
    """Integrate the driven two-level Schrödinger equation numerically.

    Uses the carrier-frame Hamiltonian ``[[0, Ω/2], [Ω/2, -δ]]`` on
    (spin-up, trion) and adaptive DOP853 steps.  Sech pulses are integrated
    over ``|t| <= window/σ``.
    """
    if p.shape == "sech":
        t0, t1 = -window / p.bandwidth, window / p.bandwidth
    else:
        t0, t1 = 0.0, p.duration
    om0 = p.peak_rabi
    d = p.detuning

    if p.shape == "sech":
        sig = p.bandwidth

        def envelope(t):
            return om0 / math.cosh(sig * t)
    else:
        def envelope(t):
            return om0

    def rhs(t, y):
        cg = complex(y[0], y[1])
        ce = complex(y[2], y[3])
        h = 0.5 * envelope(t)
        dg = -1j * h * ce
        de = -1j * (h * cg - d * ce)
        return [dg.real, dg.imag, de.real, de.imag]

    if om0 == 0.0:
        return PulseAction(Q=1.0, phi=0.0, W=0.0)
    sol = solve_ivp(rhs, (t0, t1), [1.0, 0.0, 0.0, 0.0], method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"pulse oracle failed: {sol.message}")
    cg = complex(sol.y[0, -1], sol.y[1, -1])
    ce = complex(sol.y[2, -1], sol.y[3, -1])
    q = abs(cg)
    phi = _wrap(-cmath.phase(cg)) if q > 0 else 0.0
    return PulseAction(Q=q, phi=phi, W=abs(ce) ** 2)
