"""Ensemble optical signals: Faraday rotation/ellipticity spectra and
time-resolved traces of an inhomogeneous quantum-dot ensemble.

QD detunings δ_QD (meV) are QD transition energy minus pump photon energy,
so the pump detuning seen by a dot is ``-δ_QD/ħ`` in `PulseParams` terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit

from .constants import HBAR_MEV_PS, MU_B_MEV_PER_T, mev_to_rad_per_ps
from .nuclear import NuclearConfig, StationaryFamily, build_generator, stationary_distribution
from .parallel import ordered_map
from .pulse import PulseParams, pulse_action
from .spinmap import EvolutionParams, steady_states


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to synthesize ensemble signals.

    The bare precession frequencies form a Gaussian (centre `omega_center`,
    standard deviation `omega_spread`, rad/ps) sampled on a uniform grid of
    ``±omega_span`` standard deviations.  The grid step is
    ``omega_stride · 2a_hf / omega_substeps`` so that nuclear shifts stay on
    a common lattice.  QD detunings are sampled uniformly over
    ``±qd_window_mev`` with `qd_points` points.
    """

    pump: PulseParams
    T_R: float
    T2: float
    T1: float | None = None
    omega_center: float = 0.0
    omega_spread: float = 0.0
    omega_span: float = 4.0
    omega_stride: int = 1
    omega_substeps: int = 1
    qd_window_mev: float = 3.0
    qd_points: int = 61
    probe_hwhm_mev: float = 0.65
    nuclei: bool = False
    nuclear: NuclearConfig = field(default_factory=NuclearConfig)
    threads: int | None = 1

    def __post_init__(self):
        if self.qd_points < 1:
            raise ValueError("qd_points must be >= 1")
        if not self.probe_hwhm_mev > 0:
            raise ValueError("probe_hwhm_mev must be > 0")
        if not self.qd_window_mev >= 0:
            raise ValueError("qd_window_mev must be >= 0")
        if self.omega_spread < 0 or self.omega_span <= 0:
            raise ValueError("omega spread must be >= 0 and span > 0")

    @property
    def evolution(self) -> EvolutionParams:
        return EvolutionParams(self.omega_center, self.T_R, self.T2, self.T1)

    def pulse_for(self, delta_qd_mev: float) -> PulseParams:
        return replace(self.pump, detuning=-mev_to_rad_per_ps(delta_qd_mev))

    def qd_detunings(self) -> np.ndarray:
        if self.qd_points == 1:
            return np.zeros(1)
        # integer multiples of one step keep the grid exactly symmetric
        m = 2 * np.arange(self.qd_points) - (self.qd_points - 1)
        return m * (self.qd_window_mev / (self.qd_points - 1))

    def qd_weights(self) -> np.ndarray:
        """Trapezoid weights for a uniform QD spectral density."""
        w = np.ones(self.qd_points)
        if self.qd_points > 1:
            w[0] = w[-1] = 0.5
        return w / w.sum()

    def _lattice_step(self) -> float:
        a = self.nuclear.a_hf
        if a > 0:
            return self.omega_stride * 2.0 * a / self.omega_substeps
        return max(self.omega_spread, 1e-6) / 200.0

    def omega0_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Bare-frequency samples and normalized Gaussian weights."""
        if self.omega_spread == 0:
            return np.array([self.omega_center]), np.ones(1)
        step = self._lattice_step()
        k = math.ceil(self.omega_span * self.omega_spread / step)
        grid = self.omega_center + step * np.arange(-k, k + 1)
        w = np.exp(-0.5 * ((grid - self.omega_center) / self.omega_spread) ** 2)
        return grid, w / w.sum()


@dataclass
class SpectraResult:
    probe_mev: np.ndarray
    rotation: np.ndarray
    ellipticity: np.ndarray
    qd_mev: np.ndarray
    qd_amplitude: np.ndarray

    def centroid(self, which: str = "ellipticity") -> float:
        y = getattr(self, which)
        return float(np.sum(self.probe_mev * y) / np.sum(y))

    def fwhm(self, which: str = "ellipticity") -> float:
        """Full width at half maximum with linear interpolation of the crossings."""
        x, y = self.probe_mev, np.abs(getattr(self, which))
        i = int(np.argmax(y))
        half = 0.5 * y[i]
        lo = i
        while lo > 0 and y[lo - 1] >= half:
            lo -= 1
        hi = i
        while hi < len(y) - 1 and y[hi + 1] >= half:
            hi += 1
        xl = x[lo] if lo == 0 else x[lo - 1] + (half - y[lo - 1]) * (x[lo] - x[lo - 1]) / (y[lo] - y[lo - 1])
        xh = x[hi] if hi == len(y) - 1 else x[hi] + (y[hi] - half) * (x[hi + 1] - x[hi]) / (y[hi] - y[hi + 1])
        return float(xh - xl)


def probe_kernels(delta, gamma: float):
    """Dispersive (rotation, odd) and absorptive (ellipticity, even) Lorentzian weights."""
    if not gamma > 0:
        raise ValueError("probe width must be > 0")
    delta = np.asarray(delta, dtype=float)
    den = delta**2 + gamma**2
    return gamma * delta / den, gamma**2 / den


def spread_for_t2star(t2star: float) -> float:
    """Gaussian std of ω giving the ensemble envelope ``exp(-(t/T2*)²)``."""
    return math.sqrt(2.0) / t2star


def delta_g_for_spread(omega_spread: float, field_t: float) -> float:
    return omega_spread * HBAR_MEV_PS / (MU_B_MEV_PER_T * field_t)


def _family(cfg: EnsembleConfig, delta_qd_mev: float) -> tuple[StationaryFamily, np.ndarray]:
    grid, w = cfg.omega0_grid()
    fam = StationaryFamily(grid[0], len(grid), cfg.omega_stride, cfg.omega_substeps,
                           pulse_action(cfg.pulse_for(delta_qd_mev)), cfg.evolution, cfg.nuclear)
    return fam, w


def qd_amplitude(delta_qd_mev: float, omega0: float, cfg: EnsembleConfig) -> complex:
    """Post-pulse phasor ``Sz + iSy`` of one dot, averaged coherently over P∞(n) with nuclei."""
    action = pulse_action(cfg.pulse_for(delta_qd_mev))
    e = replace(cfg.evolution, omega=omega0)
    if not cfg.nuclei:
        s = steady_states(action, [omega0], e.T_R, e.T2, e.T1)[0]
        return complex(s[2], s[1])
    gen = build_generator(omega0, action, e, cfg.nuclear)
    p = stationary_distribution(gen).p
    return complex(np.sum(p * (gen.spin[:, 2] + 1j * gen.spin[:, 1])))


def qd_phasors(delta_qd_mev: float, cfg: EnsembleConfig) -> np.ndarray:
    """`qd_amplitude` for every bare frequency of the ensemble grid."""
    if cfg.nuclei:
        fam, _ = _family(cfg, delta_qd_mev)
        return fam.phasors()
    grid, _ = cfg.omega0_grid()
    s = steady_states(pulse_action(cfg.pulse_for(delta_qd_mev)), grid, cfg.T_R, cfg.T2, cfg.T1)
    return s[:, 2] + 1j * s[:, 1]


def mean_amplitude(delta_qd_mev: float, cfg: EnsembleConfig) -> float:
    """Positive-delay amplitude of QDs at one detuning, averaged over ω0."""
    _, w = cfg.omega0_grid()
    return float(w @ np.abs(qd_phasors(delta_qd_mev, cfg)))


def amplitude_profile(cfg: EnsembleConfig) -> tuple[np.ndarray, np.ndarray]:
    dq = cfg.qd_detunings()
    amps = ordered_map(lambda d: mean_amplitude(d, cfg), dq, cfg.threads)
    return dq, np.array(amps)


def spectra(cfg: EnsembleConfig, probe_mev) -> SpectraResult:
    """Positive-delay rotation and ellipticity versus probe detuning."""
    probe = np.atleast_1d(np.asarray(probe_mev, dtype=float))
    if probe.size == 0:
        raise ValueError("probe grid is empty")
    dq, amp = amplitude_profile(cfg)
    weighted = cfg.qd_weights() * amp
    R, E = probe_kernels(probe[:, None] - dq[None, :], cfg.probe_hwhm_mev)
    return SpectraResult(probe, R @ weighted, E @ weighted, dq, amp)


def _post_pulse_components(delta_qd_mev: float, cfg: EnsembleConfig):
    # ensemble-weighted (Sy, Sz) on the frequency grid used for traces
    grid, w = cfg.omega0_grid()
    if cfg.nuclei:
        fam, w = _family(cfg, delta_qd_mev)
        rho = fam.lattice_density(w)
        return fam.omega, rho * fam.spin[:, 1], rho * fam.spin[:, 2]
    s = steady_states(pulse_action(cfg.pulse_for(delta_qd_mev)), grid, cfg.T_R, cfg.T2, cfg.T1)
    return grid, w * s[:, 1], w * s[:, 2]


def time_trace(cfg: EnsembleConfig, delays, probe_mev: float = 0.0, chunk: int = 256) -> np.ndarray:
    """Ensemble Sz seen by the probe at each pump-probe delay (ps).

    Negative delays are evaluated a period later, at ``T_R + t``.  QDs are
    weighted by the ellipticity kernel centred on `probe_mev`.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    if np.any(delays <= -cfg.T_R) or np.any(delays >= cfg.T_R):
        raise ValueError("delays must lie in (-T_R, T_R)")
    dq = cfg.qd_detunings()
    _, kern = probe_kernels(probe_mev - dq, cfg.probe_hwhm_mev)
    kern = kern * cfg.qd_weights()
    parts = ordered_map(lambda d: _post_pulse_components(d, cfg), dq, cfg.threads)
    omega = parts[0][0]
    sy = np.zeros_like(omega)
    sz = np.zeros_like(omega)
    for k, (_, y, z) in zip(kern, parts):
        sy += k * y
        sz += k * z
    sy /= kern.sum()
    sz /= kern.sum()
    t = np.where(delays < 0, delays + cfg.T_R, delays)
    out = np.empty(len(t))
    for i in range(0, len(t), chunk):
        tt = t[i:i + chunk, None]
        ph = omega[None, :] * tt
        out[i:i + chunk] = np.exp(-tt[:, 0] / cfg.T2) * (np.sin(ph) @ sy + np.cos(ph) @ sz)
    return out


@dataclass(frozen=True)
class TraceFit:
    amplitude: float
    t2star: float
    frequency_ghz: float
    phase: float


def fit_trace(delays, signal, f_guess_ghz: float, t2star_guess: float = 450.0) -> TraceFit:
    """Fit ``A exp(-(t/T2*)²) cos(2πft + φ)`` to non-negative delays."""
    delays = np.asarray(delays, dtype=float)
    signal = np.asarray(signal, dtype=float)
    m = delays >= 0
    t, y = delays[m], signal[m]

    def model(t, A, tau, f, ph):
        return A * np.exp(-(t / tau) ** 2) * np.cos(2 * np.pi * f * t + ph)

    # amplitude and phase guess from the first point; sign absorbed into φ
    p0 = [abs(y[0]) or np.abs(y).max(), t2star_guess, f_guess_ghz * 1e-3, 0.0 if y[0] >= 0 else math.pi]
    popt, _ = curve_fit(model, t, y, p0=p0, maxfev=20000)
    A, tau, f, ph = popt
    if A < 0:
        A, ph = -A, ph + math.pi
    return TraceFit(float(A), float(abs(tau)), float(f * 1e3), float(math.remainder(ph, 2 * math.pi)))


def negative_delay_ratio(delays, signal, fit: TraceFit) -> float:
    """Largest |signal| at negative delay relative to the fitted positive-delay amplitude."""
    delays = np.asarray(delays, dtype=float)
    neg = np.abs(np.asarray(signal)[delays < 0])
    return float(neg.max() / fit.amplitude) if neg.size else 0.0
