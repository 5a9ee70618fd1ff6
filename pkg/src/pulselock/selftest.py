"""Fast analytic and oracle checks behind the `selftest` subcommand."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .constants import SECH_FWHM_FACTOR, mev_to_rad_per_ps
from .gammafn import log_gamma_complex
from .nuclear import (
    BirthDeathChain,
    NuclearConfig,
    NuclearDistribution,
    evolve_distribution,
    flip_rates,
    stationary_distribution,
)
from .parallel import ordered_map
from .pulse import PulseAction, PulseParams, ode_pulse_oracle, pulse_action
from .spinmap import EvolutionParams, iterate_map, period_map, steady_state, steady_states


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def _gamma_checks():
    yield Check("log_gamma_one", abs(log_gamma_complex(1.0)), 1e-13)
    yield Check("log_gamma_half", abs(log_gamma_complex(0.5) - 0.5 * math.log(math.pi)), 1e-13)
    err = 0.0
    for y in (0.3, 1.0, 2.0):
        ref = math.pi / math.cosh(math.pi * y)
        err = max(err, abs(math.exp(2 * log_gamma_complex(complex(0.5, y)).real) / ref - 1.0))
    yield Check("gamma_reflection_rel", err, 1e-12)


def _action_diff(a: PulseAction, b: PulseAction) -> float:
    return max(abs(a.Q - b.Q), abs(a.W - b.W), abs(math.remainder(a.phi - b.phi, 2 * math.pi)) * (a.Q > 1e-6))


def _pulse_checks(cfg: ExperimentConfig, threads: int):
    sig = cfg.sech_sigma
    T = SECH_FWHM_FACTOR / sig
    areas = (0.5 * math.pi, math.pi, 2 * math.pi)
    dets = np.linspace(-3.0, 3.0, 7)
    pulses = [PulseParams.sech(a, d * sig, sig) for a in areas for d in dets]
    pulses += [PulseParams.square(a, d / T, T) for a in areas for d in dets]
    diffs = ordered_map(lambda p: _action_diff(pulse_action(p), ode_pulse_oracle(p)), pulses, threads)
    n = len(diffs) // 2
    yield Check("sech_vs_oracle", max(diffs[:n]), 1e-6)
    yield Check("square_vs_oracle", max(diffs[n:]), 1e-6)
    yield Check("unitarity", max(abs(pulse_action(p).W + pulse_action(p).Q ** 2 - 1) for p in pulses), 1e-12)
    err = 0.0
    for d in dets[dets != 0]:
        a = pulse_action(PulseParams.sech(2 * math.pi, d * sig, sig))
        err = max(err, a.W, abs(abs(a.phi) - 2 * math.atan(1 / abs(d))))
    yield Check("sech_2pi_transparency", err, 1e-6)


def _spin_checks(cfg: ExperimentConfig, rng):
    T_R = cfg.T_R_ps
    dark = PulseAction(0.0, 0.0, 1.0)
    w_psc = 2 * math.pi * 225 / T_R
    s = steady_state(period_map(dark, EvolutionParams(w_psc, T_R, math.inf)))
    yield Check("steady_psc", float(np.abs(s - [0, 0, -0.5]).max()), 1e-12)
    s = steady_state(period_map(dark, EvolutionParams(w_psc + math.pi / T_R, T_R, math.inf)))
    yield Check("steady_anti_psc", float(np.abs(s - [0, 0, -1 / 6]).max()), 1e-12)

    err = 0.0
    for _ in range(5):
        q = rng.uniform(0.05, 1.0)
        a = PulseAction(q, rng.uniform(-math.pi, math.pi), 1 - q * q)
        m = period_map(a, EvolutionParams(rng.uniform(0.05, 0.2), T_R, cfg.T2_ps))
        err = max(err, float(np.abs(iterate_map(m, np.zeros(3), 10_000) - steady_state(m)).max()))
    yield Check("fixed_point_vs_iteration", err, 1e-10)

    omegas = rng.uniform(0.10, 0.12, 20)
    err = 0.0
    for d in rng.uniform(0.1, 3.0, 5) * cfg.sech_sigma:
        sp = steady_states(pulse_action(cfg.pump(detuning=d)), omegas, T_R, cfg.T2_ps, cfg.T1_ps)
        sm = steady_states(pulse_action(cfg.pump(detuning=-d)), omegas, T_R, cfg.T2_ps, cfg.T1_ps)
        err = max(err, float(np.abs(sm * [-1, 1, 1] - sp).max()))
    yield Check("detuning_reflection", err, 1e-12)


def _nuclear_checks(cfg: ExperimentConfig):
    T_R = cfg.T_R_ps
    ncfg = cfg.nuclear()
    bad = 0
    offsets = np.array([-0.25, -0.1, 0.1, 0.25])
    for N in range(221, 227):
        omega = 2 * math.pi * (N + offsets) / T_R
        expect = np.sign(-offsets)
        for dq, sgn in ((-0.5, 1.0), (0.5, -1.0)):
            act = pulse_action(cfg.pump(detuning=-mev_to_rad_per_ps(dq)))
            s = steady_states(act, omega, T_R, cfg.T2_ps, cfg.T1_ps)
            r = flip_rates(act.W, s, omega, T_R, ncfg)
            bad += int(np.sum(np.sign(r.w_plus - r.w_minus) != sgn * expect))
        act = pulse_action(cfg.pump(detuning=0.0))
        r = flip_rates(act.W, steady_states(act, omega, T_R, cfg.T2_ps, cfg.T1_ps), omega, T_R, ncfg)
        bad += int(np.sum(r.w_plus != r.w_minus))
    yield Check("directionality_violations", float(bad), 0.0)

    lam, mu = 0.7, 0.3
    chain = BirthDeathChain(np.array([0, 2]), np.array([lam, 0.0]), np.array([0.0, mu]))
    t = np.linspace(0.0, 5.0, 11)
    ev = evolve_distribution(NuclearDistribution(chain.grid, [1.0, 0.0]), chain, t)
    p1 = lam / (lam + mu) * (1 - np.exp(-(lam + mu) * t))
    yield Check("two_state_closed_form", float(np.abs(ev.p[:, 1] - p1).max()), 1e-8)

    small = NuclearConfig(n_nuc=40)
    grid = small.grid()
    up = (small.n_nuc - grid) / 2.0
    down = (small.n_nuc + grid) / 2.0
    chain = BirthDeathChain(grid, up, down)
    p = stationary_distribution(chain).p
    k = (small.n_nuc + grid) // 2
    ref = np.array([math.comb(small.n_nuc, int(i)) for i in k], dtype=float)
    ref /= ref.sum()
    yield Check("binomial_stationary_rel", float(np.abs(p / ref - 1).max()), 1e-10)
    yield Check("stationary_residual_rel", float(np.abs(chain.apply(p)).max() / chain.max_rate), 1e-10)


def run_checks(cfg: ExperimentConfig, threads: int = 1) -> list[Check]:
    rng = np.random.default_rng(cfg.seed)
    return [*_gamma_checks(), *_pulse_checks(cfg, threads), *_spin_checks(cfg, rng), *_nuclear_checks(cfg)]
