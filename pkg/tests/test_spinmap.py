import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulselock.pulse import PulseAction, PulseParams, pulse_action
from pulselock.spinmap import (
    AffineMap3,
    EvolutionParams,
    SingularMapError,
    compose,
    free_evolution_map,
    iterate_map,
    nearest_psc,
    period_map,
    pulse_bloch_map,
    spin_trajectory,
    steady_state,
    steady_states,
)

T_R = 1e6 / 81.0
DARK = PulseAction(0.0, 0.0, 1.0)


def psc(n, frac=0.0):
    return 2 * math.pi * (n + frac) / T_R


def maps_equal(a, b, tol=1e-14):
    return np.allclose(a.A, b.A, atol=tol, rtol=0) and np.allclose(a.b, b.b, atol=tol, rtol=0)


def test_pulse_map_examples():
    assert maps_equal(pulse_bloch_map(PulseAction(1.0, 0.0, 0.0)), AffineMap3.identity())
    m = pulse_bloch_map(DARK)
    assert np.array_equal(m.A, np.diag([0.0, 0.0, 0.5]))
    assert np.array_equal(m.b, [0.0, 0.0, -0.25])
    m = pulse_bloch_map(PulseAction(1.0, math.pi / 2, 0.0))
    assert np.allclose(m([0.3, 0.1, -0.2]), [-0.1, 0.3, -0.2], atol=1e-15)


def test_free_evolution_examples():
    e = EvolutionParams(0.1, T_R, 1e5, 2e5)
    assert maps_equal(free_evolution_map(e, 0.0), AffineMap3.identity())
    lossless = EvolutionParams(0.1, T_R, math.inf)
    assert maps_equal(free_evolution_map(lossless, 2 * math.pi / 0.1), AffineMap3.identity(), 1e-12)
    # quarter turn about +x takes -z to +y (right-handed)
    s = free_evolution_map(lossless, 0.5 * math.pi / 0.1)([0.0, 0.0, -0.5])
    assert np.allclose(s, [0.0, 0.5, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        free_evolution_map(e, -1.0)


def test_free_evolution_decay_rates():
    e = EvolutionParams(0.0, T_R, 100.0, 400.0)
    m = free_evolution_map(e, 200.0)
    assert m.A[0, 0] == pytest.approx(math.exp(-0.5))
    assert m.A[1, 1] == pytest.approx(math.exp(-2.0))


def test_compose_identities_and_additivity():
    rng = np.random.default_rng(3)
    m = AffineMap3(rng.normal(size=(3, 3)), rng.normal(size=3))
    assert maps_equal(compose(AffineMap3.identity(), m), m)
    assert maps_equal(compose(m, AffineMap3.identity()), m)
    e = EvolutionParams(0.113, T_R, 5e4, 7e4)
    assert maps_equal(compose(free_evolution_map(e, 300.0), free_evolution_map(e, 500.0)),
                      free_evolution_map(e, 800.0), 1e-14)
    n = AffineMap3(rng.normal(size=(3, 3)), rng.normal(size=3))
    k = AffineMap3(rng.normal(size=(3, 3)), rng.normal(size=3))
    assert maps_equal(compose(compose(m, n), k), compose(m, compose(n, k)), 1e-12)


def test_closed_forms_resonant_pi():
    lossless = math.inf
    s = steady_state(period_map(DARK, EvolutionParams(psc(225), T_R, lossless)))
    assert np.allclose(s, [0, 0, -0.5], atol=1e-12, rtol=0)
    s = steady_state(period_map(DARK, EvolutionParams(psc(225, 0.5), T_R, lossless)))
    assert np.allclose(s, [0, 0, -1 / 6], atol=1e-12, rtol=0)


def test_singular_map_detected():
    # lossless, transparent pulse: nothing pins the spin
    with pytest.raises(SingularMapError):
        steady_state(period_map(PulseAction(1.0, 0.0, 0.0), EvolutionParams(psc(10), T_R, math.inf)))
    with pytest.raises(SingularMapError):
        steady_states(PulseAction(1.0, 0.0, 0.0), [psc(10)], T_R, math.inf)


def test_fixed_point_matches_iteration_and_starts():
    rng = np.random.default_rng(7)
    for _ in range(10):
        q = rng.uniform(0.05, 1.0)
        a = PulseAction(q, rng.uniform(-math.pi, math.pi), 1 - q * q)
        m = period_map(a, EvolutionParams(rng.uniform(0.05, 0.2), T_R, rng.uniform(5e4, 3e5)))
        s = steady_state(m)
        assert np.abs(iterate_map(m, np.zeros(3), 10_000) - s).max() < 1e-10
        for _ in range(10):
            v = rng.normal(size=3)
            s0 = 0.5 * v / np.linalg.norm(v)
            assert np.abs(iterate_map(m, s0, 10_000) - s).max() < 1e-10


def test_iterate_map_edge_cases():
    m = AffineMap3(np.eye(3) * 0.5, [0.1, 0, 0])
    s0 = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(iterate_map(m, s0, 0), s0)
    assert np.array_equal(iterate_map(AffineMap3.identity(), s0, 1000), s0)
    with pytest.raises(ValueError):
        iterate_map(m, s0, -1)


def test_batched_matches_single():
    a = pulse_action(PulseParams.sech(math.pi, 0.6, 0.8))
    om = np.linspace(psc(222), psc(225), 50)
    batch = steady_states(a, om, T_R, 1.5e5, 1.2e5)
    for w, s in zip(om, batch):
        ref = steady_state(period_map(a, EvolutionParams(w, T_R, 1.5e5, 1.2e5)))
        assert np.allclose(s, ref, atol=1e-14, rtol=0)


def test_detuning_reflection():
    rng = np.random.default_rng(11)
    sig = 0.8
    for d in rng.uniform(0.05, 3.0, 10) * sig:
        om = rng.uniform(psc(220), psc(228), 10)
        for area in (0.5 * math.pi, math.pi):
            sp = steady_states(pulse_action(PulseParams.sech(area, d, sig)), om, T_R, 1.5e5)
            sm = steady_states(pulse_action(PulseParams.sech(area, -d, sig)), om, T_R, 1.5e5)
            assert np.abs(sm * [-1, 1, 1] - sp).max() < 1e-12


def test_resonant_pulse_has_no_field_component():
    for area in (0.3, math.pi, 1.5 * math.pi):
        s = steady_states(pulse_action(PulseParams.sech(area, 0.0, 0.8)),
                          np.linspace(psc(222), psc(226), 200), T_R, 1.5e5)
        assert np.all(s[:, 0] == 0.0)


@pytest.mark.parametrize("area,det", [(math.pi, 0.0), (math.pi, 0.76), (0.5 * math.pi, -0.76),
                                      (1.5 * math.pi, 1.2)])
def test_sz_troughs_at_pscs(area, det):
    a = pulse_action(PulseParams.sech(area, det, 0.8))
    x = np.linspace(221.5, 225.5, 40001)
    sz = steady_states(a, 2 * math.pi * x / T_R, T_R, 1.5e5)[:, 2]
    i = np.flatnonzero((sz[1:-1] < sz[:-2]) & (sz[1:-1] < sz[2:])) + 1
    # only the deep minima: one per PSC
    deep = i[sz[i] < np.median(sz)]
    assert np.allclose(x[deep], [222, 223, 224, 225], atol=1e-3)


def test_spin_trajectory():
    e = EvolutionParams(psc(225), T_R, math.inf)
    s = steady_state(period_map(DARK, e))
    t = np.linspace(0, T_R, 500, endpoint=False)
    traj = spin_trajectory(s, e, t)
    assert np.array_equal(traj[0], s)
    assert np.allclose(traj[:, 2], -0.5 * np.cos(e.omega * t), atol=1e-12)
    e = EvolutionParams(psc(225), T_R, 1.5e5)
    late = spin_trajectory(s, e, [T_R * (1 - 1e-12)])[0]
    assert np.linalg.norm(late) == pytest.approx(0.5 * math.exp(-T_R / 1.5e5), rel=1e-9)
    for bad in ([-1.0], [T_R]):
        with pytest.raises(ValueError):
            spin_trajectory(s, e, bad)


def test_nearest_psc():
    assert nearest_psc(psc(10), T_R) == (10, pytest.approx(psc(10)))
    n, w = nearest_psc(psc(10.4), T_R)
    assert n == 10 and w == pytest.approx(psc(10))
    assert nearest_psc(psc(10.5), T_R)[0] == 10
    assert nearest_psc(psc(11.5), T_R)[0] == 12
    f = 2 * math.pi * 18.2e-3
    assert f * T_R / (2 * math.pi) == pytest.approx(224.7, abs=0.01)
    assert nearest_psc(f, T_R)[0] == 225
    with pytest.raises(ValueError):
        nearest_psc(0.0, T_R)


def test_evolution_params_validation():
    assert EvolutionParams(0.1, 1.0, 2.0).T1 == 2.0
    for bad in (dict(T_R=0.0, T2=1.0), dict(T_R=1.0, T2=-1.0), dict(T_R=1.0, T2=1.0, T1=0.0)):
        with pytest.raises(ValueError):
            EvolutionParams(0.1, **bad)


@settings(max_examples=150, deadline=None)
@given(q=st.floats(0, 1), phi=st.floats(-math.pi, math.pi), omega=st.floats(0.01, 0.3),
       t2=st.floats(1e3, 1e7), t1=st.floats(1e3, 1e7), seed=st.integers(0, 2**32 - 1))
def test_contractivity(q, phi, omega, t2, t1, seed):
    m = period_map(PulseAction(q, phi, 1 - q * q), EvolutionParams(omega, T_R, t2, t1))
    assert max(abs(np.linalg.eigvals(m.A))) < 1.0
    v = np.random.default_rng(seed).normal(size=(20, 3))
    s = 0.5 * v / np.linalg.norm(v, axis=1, keepdims=True)
    out = s @ m.A.T + m.b
    assert np.all(np.linalg.norm(out, axis=1) <= 0.5 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(q=st.floats(0, 0.999), phi=st.floats(-math.pi, math.pi), omega=st.floats(0.01, 0.3))
def test_steady_state_inside_ball(q, phi, omega):
    s = steady_states(PulseAction(q, phi, 1 - q * q), [omega], T_R, 1.5e5)[0]
    assert np.linalg.norm(s) <= 0.5 + 1e-12
