"""Overhauser feedback: nuclear flip rates, the birth-death chain over the net
nuclear polarization n, its stationary law, and the resulting density of
electron precession frequencies.

Nuclei are spin 1/2, so n runs over {-N, -N+2, ..., N} and every flip moves
n by 2.  A positive n raises the electron precession frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import eigvalsh_tridiagonal, solve_banded

from .pulse import PulseAction, PulseParams, pulse_action
from .spinmap import EvolutionParams, steady_states


class AllRatesZeroError(ValueError):
    """The chain has no transitions at all."""


class EvolutionStepError(RuntimeError):
    """The master-equation integrator could not meet its tolerance."""


@dataclass(frozen=True)
class NuclearConfig:
    """Nuclear bath parameters.

    Parameters
    ----------
    n_nuc : int
        Number of nuclei N.
    full_shift_ghz : float
        Linear precession-frequency shift at full polarization (n = N).
    rate_scale : float
        Prefactor C of the flip rates; sets the unit of nuclear time only.
    omega_min : float, optional
        Floor (rad/ps) for ω in the 1/ω² factor.  Defaults to 1 % of 2π/T_R.
    window : (int, int), optional
        Inclusive n bounds of the simulated grid; the full grid if omitted.
    """

    n_nuc: int = 20000
    full_shift_ghz: float = 5.0
    rate_scale: float = 1.0
    omega_min: float | None = None
    window: tuple[int, int] | None = None

    def __post_init__(self):
        if self.n_nuc < 2:
            raise ValueError("n_nuc must be >= 2")
        if self.full_shift_ghz < 0:
            raise ValueError("full_shift_ghz must be >= 0")
        if not self.rate_scale > 0:
            raise ValueError("rate_scale must be > 0")
        if self.omega_min is not None and not self.omega_min > 0:
            raise ValueError("omega_min must be > 0")
        if self.window is not None:
            lo, hi = self.window
            if lo > hi or lo < -self.n_nuc or hi > self.n_nuc:
                raise ValueError(f"window {self.window} outside [-{self.n_nuc}, {self.n_nuc}]")
            if (lo - self.n_nuc) % 2 or (hi - self.n_nuc) % 2:
                raise ValueError("window bounds must have the parity of n_nuc")

    @property
    def a_hf(self) -> float:
        """Overhauser shift per unit n (rad/ps)."""
        return 2.0 * math.pi * self.full_shift_ghz * 1e-3 / self.n_nuc

    def grid(self) -> np.ndarray:
        lo, hi = self.window if self.window is not None else (-self.n_nuc, self.n_nuc)
        return np.arange(lo, hi + 1, 2, dtype=np.int64)

    def omega_floor(self, T_R: float) -> float:
        return self.omega_min if self.omega_min is not None else 0.01 * 2.0 * math.pi / T_R

    def with_window(self, lo: int, hi: int) -> NuclearConfig:
        lo = max(lo, -self.n_nuc)
        hi = min(hi, self.n_nuc)
        lo += (lo - self.n_nuc) % 2
        hi -= (hi - self.n_nuc) % 2
        return NuclearConfig(self.n_nuc, self.full_shift_ghz, self.rate_scale,
                             self.omega_min, (int(lo), int(hi)))


@dataclass
class NuclearDistribution:
    grid: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=float)
        if self.grid.shape != self.p.shape:
            raise ValueError("grid and p must have the same length")

    @classmethod
    def point(cls, grid, n0: int) -> NuclearDistribution:
        grid = np.asarray(grid, dtype=np.int64)
        i = int(np.argmin(np.abs(grid - n0)))
        p = np.zeros(len(grid))
        p[i] = 1.0
        return cls(grid, p)

    def mean(self) -> float:
        return float(self.grid @ self.p)


@dataclass(frozen=True)
class FlipRates:
    w_plus: np.ndarray
    w_minus: np.ndarray


def omega_of_n(omega0, n, cfg: NuclearConfig):
    return omega0 + cfg.a_hf * np.asarray(n)


def flip_rates(W, S, omega, T_R: float, cfg: NuclearConfig) -> FlipRates:
    """Per-nucleus flip rates, down->up (``w_plus``) and up->down (``w_minus``).

    ``w± = C · W/(2 T_R) · (1 + 2 Sz)/ω² · (1 ± 2 Sx)`` with ω clamped from
    below by the configured floor.
    """
    S = np.asarray(S, dtype=float)
    om = np.maximum(np.asarray(omega, dtype=float), cfg.omega_floor(T_R))
    common = cfg.rate_scale * W / (2.0 * T_R) * (1.0 + 2.0 * S[..., 2]) / om**2
    common = np.maximum(common, 0.0)
    sx = S[..., 0]
    return FlipRates(common * np.maximum(1.0 + 2.0 * sx, 0.0),
                     common * np.maximum(1.0 - 2.0 * sx, 0.0))


@dataclass
class BirthDeathChain:
    """Tridiagonal rate table; ``up[i]`` moves grid[i] -> grid[i]+2, ``down[i]`` to grid[i]-2."""

    grid: np.ndarray
    up: np.ndarray
    down: np.ndarray
    omega: np.ndarray | None = None
    spin: np.ndarray | None = None
    w_plus: np.ndarray | None = None
    w_minus: np.ndarray | None = None

    @property
    def max_rate(self) -> float:
        return float(max(self.up.max(initial=0.0), self.down.max(initial=0.0)))

    def matrix(self) -> sp.csc_matrix:
        """Generator G with ``dP/dt = G @ P``."""
        n = len(self.grid)
        return sp.diags([self.up[:-1], -(self.up + self.down), self.down[1:]],
                        [-1, 0, 1], shape=(n, n), format="csc")

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        out = -(self.up + self.down) * p
        out[1:] += self.up[:-1] * p[:-1]
        out[:-1] += self.down[1:] * p[1:]
        return out

    def relaxation_time(self) -> float:
        """Inverse spectral gap (irreducible chains only)."""
        offdiag = np.sqrt(self.up[:-1] * self.down[1:])
        if len(self.grid) < 2 or np.any(offdiag == 0):
            raise ValueError("relaxation time needs an irreducible chain")
        ev = eigvalsh_tridiagonal(-(self.up + self.down), offdiag,
                                  select="i", select_range=(len(self.grid) - 2, len(self.grid) - 2))
        return float(-1.0 / ev[0])


def _as_action(pulse) -> PulseAction:
    return pulse if isinstance(pulse, PulseAction) else pulse_action(pulse)


def build_generator(omega0: float, pulse: PulseParams | PulseAction, e: EvolutionParams,
                    cfg: NuclearConfig) -> BirthDeathChain:
    """Birth-death chain for a dot of bare precession frequency `omega0`.

    `e` supplies T_R and the decay times; the precession frequency at each n
    is ``omega0 + a_hf·n``.  Occupancy factors (N ∓ n)/2 multiply the
    per-nucleus rates; outgoing rates at the grid ends are zero.
    """
    a = _as_action(pulse)
    grid = cfg.grid()
    omega = omega_of_n(omega0, grid, cfg)
    spin = steady_states(a, omega, e.T_R, e.T2, e.T1)
    rates = flip_rates(a.W, spin, omega, e.T_R, cfg)
    up = rates.w_plus * (cfg.n_nuc - grid) / 2.0
    down = rates.w_minus * (cfg.n_nuc + grid) / 2.0
    up[-1] = 0.0
    down[0] = 0.0
    return BirthDeathChain(grid, up, down, omega, spin, rates.w_plus, rates.w_minus)


def _segment_stationary(up, down, s, e):
    # detailed balance on states s..e, all interior edges positive
    lr = np.log(up[s:e]) - np.log(down[s + 1:e + 1])
    lp = np.concatenate(([0.0], np.cumsum(lr)))
    p = np.exp(lp - lp.max())
    return p / p.sum()


def _exit_right_probability(up, down, s, e):
    # probability that a walk started in s..e leaves through the right end
    n = e - s + 1
    lam = up[s:e + 1]
    mu = down[s:e + 1]
    ab = np.zeros((3, n))
    ab[1] = lam + mu
    ab[0, 1:] = -lam[:-1]
    ab[2, :-1] = -mu[1:]
    rhs = np.zeros(n)
    rhs[-1] = lam[-1]
    return solve_banded((1, 1), ab, rhs)


def stationary_distribution(gen: BirthDeathChain, initial=None) -> NuclearDistribution:
    """Stationary law by the detailed-balance product ``P(n+2)/P(n) = λ(n)/μ(n+2)``.

    If some edge has a zero rate the grid splits into segments.  Closed
    segments are the recurrent classes; each receives the `initial` mass
    that ends up in it (uniform over the grid if `initial` is omitted), with
    transient mass routed by exit probabilities.
    """
    up = np.asarray(gen.up, dtype=float)
    down = np.asarray(gen.down, dtype=float)
    n = len(gen.grid)
    if n == 1:
        return NuclearDistribution(gen.grid, np.ones(1))
    if gen.max_rate == 0.0:
        raise AllRatesZeroError("all transition rates are zero")
    cut = (up[:-1] == 0.0) | (down[1:] == 0.0)
    if not cut.any():
        return NuclearDistribution(gen.grid, _segment_stationary(up, down, 0, n - 1))

    bounds = np.flatnonzero(cut)
    starts = np.concatenate(([0], bounds + 1))
    ends = np.concatenate((bounds, [n - 1]))
    if initial is None:
        mass = np.ones(n) / n
    else:
        mass = np.array(initial.p if isinstance(initial, NuclearDistribution) else initial, dtype=float)
    leaks_left = [s > 0 and down[s] > 0 for s in starts]
    leaks_right = [e < n - 1 and up[e] > 0 for e in ends]

    # inter-segment flow is one-way, so at most one pass per segment is needed
    for _ in range(len(starts)):
        moved = False
        for s, e, ll, lr_ in zip(starts, ends, leaks_left, leaks_right):
            m = mass[s:e + 1]
            if not (ll or lr_) or m.sum() == 0.0:
                continue
            if ll and lr_:
                h = _exit_right_probability(up, down, s, e)
                right = float(np.clip(m @ h, 0.0, m.sum()))
            else:
                right = m.sum() if lr_ else 0.0
            left = m.sum() - right
            if right > 0:
                mass[e + 1] += right
            if left > 0:
                mass[s - 1] += left
            mass[s:e + 1] = 0.0
            moved = True
        if not moved:
            break

    p = np.zeros(n)
    for s, e in zip(starts, ends):
        m = mass[s:e + 1].sum()
        if m > 0:
            p[s:e + 1] = m * (_segment_stationary(up, down, s, e) if e > s else 1.0)
    return NuclearDistribution(gen.grid, p / p.sum())


@dataclass
class Evolution:
    """Distributions at the requested times, with integrator diagnostics."""

    times: np.ndarray
    grid: np.ndarray
    p: np.ndarray
    clip_magnitude: float = 0.0
    mass_drift: float = 0.0

    def __getitem__(self, i) -> NuclearDistribution:
        return NuclearDistribution(self.grid, self.p[i])

    def __len__(self):
        return len(self.times)


def evolve_distribution(P0: NuclearDistribution, gen: BirthDeathChain, t_grid,
                        rtol: float = 1e-10, atol: float = 1e-15) -> Evolution:
    """Integrate the master equation with a stiff (BDF) scheme.

    Negative entries above -1e-12 are clipped and the vector renormalized; the
    largest clipped magnitude and the largest pre-normalization mass error are
    reported.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly ascending and start at 0")
    if not np.array_equal(P0.grid, gen.grid):
        raise ValueError("initial distribution and generator grids differ")
    p0 = P0.p.astype(float)
    if gen.max_rate == 0.0 or len(t_grid) == 1:
        return Evolution(t_grid, gen.grid, np.tile(p0, (len(t_grid), 1)))
    G = gen.matrix()
    sol = solve_ivp(lambda t, y: G @ y, (0.0, t_grid[-1]), p0, method="BDF",
                    t_eval=t_grid, jac=G, rtol=rtol, atol=atol)
    if not sol.success:
        raise EvolutionStepError(f"master equation integration failed: {sol.message}")
    p = sol.y.T.copy()
    total0 = p0.sum()
    drift = float(np.max(np.abs(p.sum(axis=1) - total0)))
    worst_neg = max(0.0, float(-p.min()))
    if worst_neg > 1e-12:
        raise EvolutionStepError(f"negative probability {-worst_neg:.3g} beyond tolerance")
    p = np.maximum(p, 0.0)
    p *= (total0 / p.sum(axis=1))[:, None]
    return Evolution(t_grid, gen.grid, p, worst_neg, drift)


class StationaryFamily:
    """Stationary distributions for a uniform family of bare frequencies.

    Bare frequencies are ``omega_base + k·stride·h`` (k < count) with lattice
    step ``h = 2·a_hf/substeps``, so every ``omega0 + a_hf·n`` lands on one
    shared lattice and the steady spin is solved once per lattice point.
    """

    def __init__(self, omega_base: float, count: int, stride: int, substeps: int,
                 action: PulseAction, e: EvolutionParams, cfg: NuclearConfig):
        if cfg.a_hf <= 0:
            raise ValueError("lattice family needs a nonzero Overhauser coupling")
        if count < 1 or stride < 1 or substeps < 1:
            raise ValueError("count, stride and substeps must be >= 1")
        self.cfg = cfg
        self.count = count
        self.stride = stride
        self.substeps = substeps
        self.grid = cfg.grid()
        self.h = 2.0 * cfg.a_hf / substeps
        self.omega0 = omega_base + np.arange(count) * stride * self.h
        nlat = (count - 1) * stride + (len(self.grid) - 1) * substeps + 1
        self.omega = omega_base + cfg.a_hf * self.grid[0] + np.arange(nlat) * self.h
        self.spin = steady_states(action, self.omega, e.T_R, e.T2, e.T1)
        r = flip_rates(action.W, self.spin, self.omega, e.T_R, cfg)
        with np.errstate(divide="ignore"):
            self._log_wp = np.log(r.w_plus)
            self._log_wm = np.log(r.w_minus)
            self._log_occ_up = np.log((cfg.n_nuc - self.grid) / 2.0)
            self._log_occ_dn = np.log((cfg.n_nuc + self.grid) / 2.0)
        self._action = action
        self._e = e

    def lattice_index(self, k) -> np.ndarray:
        k = np.asarray(k)
        return k[:, None] * self.stride + np.arange(len(self.grid))[None, :] * self.substeps

    def block(self, k0: int, k1: int) -> tuple[np.ndarray, np.ndarray]:
        """Stationary P (rows k0..k1-1) and their lattice indices."""
        L = self.lattice_index(np.arange(k0, k1))
        J = len(self.grid)
        if J == 1:
            return np.ones((k1 - k0, 1)), L
        lr = (self._log_wp[L[:, :-1]] + self._log_occ_up[:-1]
              - self._log_wm[L[:, 1:]] - self._log_occ_dn[1:])
        lp = np.concatenate((np.zeros((k1 - k0, 1)), np.cumsum(lr, axis=1)), axis=1)
        bad = ~np.all(np.isfinite(lr), axis=1)
        lp[bad] = 0.0
        P = np.exp(lp - lp.max(axis=1, keepdims=True))
        P /= P.sum(axis=1, keepdims=True)
        for i in np.flatnonzero(bad):
            P[i] = self._slow_row(k0 + i)
        return P, L

    def _slow_row(self, k: int) -> np.ndarray:
        gen = build_generator(self.omega0[k], self._action, self._e, self.cfg)
        return stationary_distribution(gen).p

    def blocks(self, chunk: int = 512):
        for k0 in range(0, self.count, chunk):
            k1 = min(self.count, k0 + chunk)
            yield k0, k1, *self.block(k0, k1)

    def lattice_density(self, weights) -> np.ndarray:
        """``Σ_k weights[k]·P_k`` accumulated on the frequency lattice."""
        weights = np.asarray(weights, dtype=float)
        rho = np.zeros(len(self.omega))
        for k0, k1, P, L in self.blocks():
            rho += np.bincount(L.ravel(), (P * weights[k0:k1, None]).ravel(), minlength=len(rho))
        return rho

    def phasors(self) -> np.ndarray:
        """``Σ_n P_k(n)·(Sz + iSy)`` for every bare frequency."""
        z = self.spin[:, 2] + 1j * self.spin[:, 1]
        out = np.empty(self.count, dtype=complex)
        for k0, k1, P, L in self.blocks():
            out[k0:k1] = np.sum(P * z[L], axis=1)
        return out

    def boundary_mass(self) -> float:
        worst = 0.0
        for _, _, P, _ in self.blocks():
            worst = max(worst, float(P[:, 0].max()), float(P[:, -1].max()))
        return worst


def _uniform_step(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return None
    d = np.diff(x)
    step = d.mean()
    if step > 0 and np.allclose(d, step, rtol=1e-9, atol=0.0):
        return float(step)
    return None


def _lattice_params(omega0, cfg: NuclearConfig, max_substeps: int = 64):
    step = _uniform_step(omega0)
    if step is None or cfg.a_hf == 0:
        return None
    two_a = 2.0 * cfg.a_hf
    ratio = step / two_a
    if ratio >= 1:
        r = round(ratio)
        if abs(ratio - r) < 1e-9 * ratio:
            return r, 1
    inv = two_a / step
    r = round(inv)
    if 1 <= r <= max_substeps and abs(inv - r) < 1e-9 * inv:
        return 1, r
    return None


def linear_binning(x, w, edges) -> np.ndarray:
    """Deposit weights on bin centres by linear interpolation (uniform edges).

    Mass outside the outer bin centres goes to the outermost bins; mass
    outside the edges is dropped.
    """
    edges = np.asarray(edges, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    inside = (x >= edges[0]) & (x <= edges[-1])
    x, w = x[inside], w[inside]
    nb = len(edges) - 1
    width = (edges[-1] - edges[0]) / nb
    u = np.clip((x - edges[0]) / width - 0.5, 0.0, nb - 1.0)
    i = np.minimum(np.floor(u).astype(np.int64), nb - 1)
    frac = u - i
    out = np.bincount(i, w * (1.0 - frac), minlength=nb)
    hi = np.minimum(i + 1, nb - 1)
    out += np.bincount(hi, w * frac, minlength=nb)
    return out[:nb]


def _bin(x, w, edges, binning):
    if binning == "linear" and _uniform_step(edges) is not None:
        return linear_binning(x, w, edges)
    return np.histogram(x, np.asarray(edges, dtype=float), weights=w)[0]


def dos(omega0, weights, pulse, e: EvolutionParams, cfg: NuclearConfig, omega_bins,
        binning: str = "linear") -> np.ndarray:
    """Density of precession frequencies at nuclear stationarity.

    Each bare frequency ``omega0[k]`` (weight ``weights[k]``) contributes its
    stationary P(n) placed at ``omega0[k] + a_hf·n``.  The result is a density
    over `omega_bins` (edges) normalized to unit integral.
    """
    omega_bins = np.asarray(omega_bins, dtype=float)
    if omega_bins.ndim != 1 or len(omega_bins) < 2 or np.any(np.diff(omega_bins) <= 0):
        raise ValueError("omega_bins must be at least two ascending edges")
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    weights = np.broadcast_to(np.asarray(weights, dtype=float), omega0.shape)
    a = _as_action(pulse)
    lattice = _lattice_params(omega0, cfg)
    if lattice is not None:
        fam = StationaryFamily(omega0[0], len(omega0), lattice[0], lattice[1], a, e, cfg)
        x, m = fam.omega, fam.lattice_density(weights)
    elif cfg.a_hf == 0:
        x, m = omega0, weights
    else:
        xs, ms = [], []
        for w0, wt in zip(omega0, weights):
            gen = build_generator(w0, a, e, cfg)
            xs.append(gen.omega)
            ms.append(wt * stationary_distribution(gen).p)
        x, m = np.concatenate(xs), np.concatenate(ms)
    h = _bin(x, m, omega_bins, binning)
    total = h.sum()
    if total <= 0:
        raise ValueError("no probability mass inside the requested frequency bins")
    return h / (total * np.diff(omega_bins))


def fold_to_psc(omega, mass, T_R: float, bins_per_spacing: int) -> np.ndarray:
    """Fold mass onto the PSC phase ``frac(ωT_R/2π)`` with linear binning.

    Bin ``i`` is centred at phase ``i/bins_per_spacing``, so bin 0 sits on
    the PSCs and bin ``bins/2`` on the midpoints.  Returns a density on
    [0, 1) with unit integral.
    """
    phase = np.asarray(omega, dtype=float) * T_R / (2.0 * math.pi)
    u = (phase * bins_per_spacing) % bins_per_spacing
    i = np.floor(u).astype(np.int64)
    frac = u - i
    mass = np.asarray(mass, dtype=float)
    out = np.bincount(i % bins_per_spacing, mass * (1 - frac), minlength=bins_per_spacing)
    out += np.bincount((i + 1) % bins_per_spacing, mass * frac, minlength=bins_per_spacing)
    return out * bins_per_spacing / out.sum()
