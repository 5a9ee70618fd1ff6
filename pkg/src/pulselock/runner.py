"""Subcommand implementations.  Each returns a `Table` of plot-ready rows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .constants import mev_to_rad_per_ps
from .ensemble import fit_trace, negative_delay_ratio, spectra, time_trace
from .nuclear import (
    NuclearDistribution,
    build_generator,
    dos,
    evolve_distribution,
    stationary_distribution,
)
from .parallel import ordered_map
from .pulse import ode_pulse_oracle, pulse_action
from .spinmap import steady_states


@dataclass
class Table:
    command: str
    columns: list[str]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)


def _pulse_rate(cfg: ExperimentConfig) -> float:
    # detuning unit: σ for sech pulses, 1/T for square pulses
    p = cfg.pump()
    return p.bandwidth if p.shape == "sech" else 1.0 / p.duration


def run_pulse(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: area_pi, detuning_rate, detuning_rad_ps, Q, phi, W (+ oracle columns)."""
    rate = _pulse_rate(cfg)
    jobs = [(a, d) for a in cfg.pulse_areas_pi for d in cfg.pulse_detunings_sigma]

    def one(job):
        a, d = job
        p = cfg.pump(area=a * math.pi, detuning=d * rate)
        act = pulse_action(p)
        row = (a, d, p.detuning, act.Q, act.phi, act.W)
        if cfg.pulse_oracle:
            ref = ode_pulse_oracle(p)
            row += (ref.Q, ref.phi, ref.W)
        return row

    rows = ordered_map(one, jobs, threads)
    cols = ["area_pi", "detuning_rate", "detuning_rad_ps", "Q", "phi", "W"]
    meta = {"rate_rad_ps": rate}
    if cfg.pulse_oracle:
        cols += ["Q_ode", "phi_ode", "W_ode"]
        meta["max_oracle_diff"] = max(
            max(abs(r[3] - r[6]), abs(math.remainder(r[4] - r[7], 2 * math.pi)), abs(r[5] - r[8]))
            for r in rows)
    return Table("pulse", cols, rows, meta)


def run_steady_state(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: detuning_mev, omega_TR_2pi, Sx, Sy, Sz (post-pulse steady state)."""
    x = np.linspace(cfg.ss_psc_min, cfg.ss_psc_max, cfg.ss_points)
    omega = 2.0 * math.pi * x / cfg.T_R_ps
    rows = []
    for dq in cfg.ss_detunings_mev:
        act = pulse_action(cfg.pump(detuning=-mev_to_rad_per_ps(dq)))
        s = steady_states(act, omega, cfg.T_R_ps, cfg.T2_ps, cfg.T1_ps)
        rows += [(dq, xi, *si) for xi, si in zip(x, s)]
    return Table("steady-state", ["detuning_mev", "omega_TR_2pi", "Sx", "Sy", "Sz"], rows)


def trace_delays(cfg: ExperimentConfig) -> np.ndarray:
    n = int(math.floor((cfg.trace_t_max_ps - cfg.trace_t_min_ps) / cfg.trace_step_ps + 1e-9))
    return cfg.trace_t_min_ps + cfg.trace_step_ps * np.arange(n + 1)


def run_trace(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: area_pi, delay_ps, signal (ensemble Sz at zero probe detuning)."""
    delays = trace_delays(cfg)
    rows, fits = [], {}
    f_guess = cfg.omega_larmor / (2.0 * math.pi) * 1e3
    for a in cfg.trace_areas_pi:
        ens = cfg.ensemble(a * math.pi, nuclei=cfg.trace_nuclei, threads=threads)
        sig = time_trace(ens, delays)
        rows += [(a, t, s) for t, s in zip(delays, sig)]
        if np.sum(delays >= 0) >= 8:
            fit = fit_trace(delays, sig, f_guess, cfg.t2star_ps)
            fits[f"{a:g}"] = {"t2star_ps": fit.t2star, "frequency_ghz": fit.frequency_ghz,
                              "amplitude": fit.amplitude,
                              "negative_ratio": negative_delay_ratio(delays, sig, fit)}
    return Table("trace", ["area_pi", "delay_ps", "signal"], rows, {"fits": fits})


def run_spectra(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: area_pi, probe_mev, rotation, ellipticity."""
    probe = np.linspace(cfg.probe_min_mev, cfg.probe_max_mev, cfg.probe_points)
    rows, summary = [], {}
    for a in cfg.spectra_areas_pi:
        res = spectra(cfg.ensemble(a * math.pi, nuclei=cfg.spectra_nuclei, threads=threads), probe)
        rows += [(a, p, r, e) for p, r, e in zip(probe, res.rotation, res.ellipticity)]
        summary[f"{a:g}"] = {"fe_centroid_mev": res.centroid(), "fe_fwhm_mev": res.fwhm(),
                             "fr_at_zero": float(np.interp(0.0, probe, res.rotation))}
    return Table("spectra", ["area_pi", "probe_mev", "rotation", "ellipticity"], rows,
                 {"summary": summary})


def evolve_setup(cfg: ExperimentConfig, detuning_mev: float):
    """Generator and initial point distribution for one `nuclear-evolve` panel."""
    N = cfg.n_nuc
    n0 = N - 2 * round((N - cfg.evolve_init_fraction * N) / 2)
    half = int(math.ceil(0.5 * cfg.evolve_window_spacings * cfg.n_per_spacing()))
    ncfg = cfg.nuclear((n0 - half, n0 + half))
    omega0 = (cfg.omega_larmor if cfg.evolve_omega0_psc is None
              else 2.0 * math.pi * cfg.evolve_omega0_psc / cfg.T_R_ps)
    pulse = cfg.pump(detuning=-mev_to_rad_per_ps(detuning_mev))
    gen = build_generator(omega0, pulse, cfg.evolution(omega0), ncfg)
    return gen, NuclearDistribution.point(gen.grid, n0)


def run_nuclear_evolve(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: detuning_mev, time, n, n_over_N, omega_TR_2pi, P."""

    def one(dq):
        gen, p0 = evolve_setup(cfg, dq)
        tau = gen.relaxation_time()
        t_max = cfg.evolve_t_max if cfg.evolve_t_max is not None else 15.0 * tau
        times = np.linspace(0.0, t_max, cfg.evolve_times)
        ev = evolve_distribution(p0, gen, times)
        pinf = stationary_distribution(gen, p0).p
        info = {"relaxation_time": tau, "clip_magnitude": ev.clip_magnitude,
                "mass_drift": ev.mass_drift, "final_vs_stationary": float(np.abs(ev.p[-1] - pinf).max()),
                "boundary_mass": float(max(pinf[0], pinf[-1]))}
        return gen, ev, info

    results = ordered_map(one, cfg.evolve_detunings_mev, threads)
    rows, meta = [], {}
    for dq, (gen, ev, info) in zip(cfg.evolve_detunings_mev, results):
        x = gen.omega * cfg.T_R_ps / (2.0 * math.pi)
        for t, p in zip(ev.times, ev.p):
            rows += [(dq, t, int(n), n / cfg.n_nuc, xi, pi) for n, xi, pi in zip(gen.grid, x, p)]
        meta[f"{dq:g}"] = info
    return Table("nuclear-evolve", ["detuning_mev", "time", "n", "n_over_N", "omega_TR_2pi", "P"],
                 rows, meta)


def dos_histogram(cfg: ExperimentConfig, detuning_mev: float):
    """Stationary DOS of the Gaussian ensemble on bins centred at multiples of 1/bins (PSC units).

    Returns bin centres (ωT_R/2π) and density per PSC spacing.
    """
    ens = cfg.ensemble(stride=cfg.dos_omega_stride)
    grid, w = ens.omega0_grid()
    ncfg = ens.nuclear
    lo, hi = ncfg.grid()[0], ncfg.grid()[-1]
    scale = cfg.T_R_ps / (2.0 * math.pi)
    b = cfg.dos_bins_per_spacing
    kmin = math.floor((grid[0] + ncfg.a_hf * lo) * scale * b)
    kmax = math.ceil((grid[-1] + ncfg.a_hf * hi) * scale * b)
    k = np.arange(kmin, kmax + 1)
    edges = (np.arange(kmin, kmax + 2) - 0.5) / b / scale
    pulse = cfg.pump(detuning=-mev_to_rad_per_ps(detuning_mev))
    dens = dos(grid, w, pulse, ens.evolution, ncfg, edges) / scale
    return k, k / b, dens


def fold_histogram(k, dens, bins: int) -> np.ndarray:
    """Sum a PSC-aligned histogram onto phase bins; index 0 is the PSC."""
    out = np.bincount(np.mod(k, bins), dens, minlength=bins)
    return out / out.sum() * bins


def run_nuclear_dos(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: detuning_mev, omega_TR_2pi, density (per unit ωT_R/2π)."""
    results = ordered_map(lambda dq: dos_histogram(cfg, dq), cfg.dos_detunings_mev, threads)
    rows, meta = [], {}
    b = cfg.dos_bins_per_spacing
    for dq, (k, x, d) in zip(cfg.dos_detunings_mev, results):
        rows += [(dq, xi, di) for xi, di in zip(x, d)]
        f = fold_histogram(k, d, b)
        meta[f"{dq:g}"] = {"folded_contrast": float(f.max() / f.min()) if f.min() > 0 else math.inf,
                           "folded_peak_phase": int(np.argmax(f)) / b}
    return Table("nuclear-dos", ["detuning_mev", "omega_TR_2pi", "density"], rows, meta)


def run_selftest(cfg: ExperimentConfig, threads: int = 1) -> Table:
    """Columns: check, value, tolerance, passed."""
    from .selftest import run_checks

    rows = [(c.name, c.value, c.tolerance, c.passed) for c in run_checks(cfg, threads)]
    return Table("selftest", ["check", "value", "tolerance", "passed"], rows,
                 {"all_passed": all(r[3] for r in rows)})


COMMANDS = {
    "pulse": run_pulse,
    "steady-state": run_steady_state,
    "trace": run_trace,
    "spectra": run_spectra,
    "nuclear-evolve": run_nuclear_evolve,
    "nuclear-dos": run_nuclear_dos,
    "selftest": run_selftest,
}


def run(command: str, cfg: ExperimentConfig, threads: int = 1) -> Table:
    try:
        fn = COMMANDS[command]
    except KeyError:
        raise ValueError(f"unknown subcommand {command!r}") from None
    return fn(cfg, threads)
