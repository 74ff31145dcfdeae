import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpmsa.errors import DomainError
from mpmsa.graph_core import build_lattice_segment
from mpmsa.hamiltonian import assemble
from mpmsa.mp_geometry import MpBall
from mpmsa.msa_engine import MsaParams
from mpmsa.random_field import PotentialSample, Uniform, sample_potential
from mpmsa.spectral_reduction import (EnergyProfile, check_abc, cover_for, cover_trials,
                                      default_abc, far_set, measure_event_B, merge_intervals,
                                      min_gap, shift_covariance_check, singular_energy_set,
                                      two_volume_variable_energy)

Z = build_lattice_segment(1, 30)


def at(*labels):
    return tuple(Z.index(v) for v in labels)


def random_ball(seed, N=2, L=2, g=4.0):
    rng = np.random.default_rng(seed)
    center = at(*rng.integers(-6, 7, N))
    ball = MpBall(Z, center, L)
    V = sample_potential(Uniform(), ball.support, seed)
    return assemble(ball, Z, g, V)


def unit_window(H, seed):
    rng = np.random.default_rng(seed + 1000)
    lam = float(H.spectrum[rng.integers(H.dim)])
    lo = lam - float(rng.uniform(0, 1))
    return (lo, lo + 1.0)


def single_site(v):
    ball = MpBall(Z, at(0), 0)
    V = PotentialSample(np.array([Z.index(0)]), np.array([v]), 0)
    return assemble(ball, Z, 1.0, V)       # matrix [2 + v]


def grid_reference(profile, a, I, n=100_000):
    """Dense grid plus bisection on the solve-based F."""
    E = np.linspace(I[0], I[1], n)
    inside = profile(E) >= a
    pieces, start = [], None

    def refine(lo, hi, up):
        # up: F rises through a between lo and hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if (profile.direct(mid) >= a) == up:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    for k in range(n):
        if inside[k] and start is None:
            start = I[0] if k == 0 else refine(E[k - 1], E[k], True)
        if not inside[k] and start is not None:
            pieces.append((start, refine(E[k - 1], E[k], False)))
            start = None
    if start is not None:
        pieces.append((start, I[1]))
    return pieces, (I[1] - I[0]) / (n - 1)


# --- covers

def test_single_pole_closed_form():
    H = single_site(0.5)                      # pole at 2.5
    a = 4.0
    cov = singular_energy_set(EnergyProfile(H), a, (2.0, 3.0))
    assert cov.count == 1
    assert cov.intervals[0] == pytest.approx([2.25, 2.75], abs=1e-12)
    clipped = singular_energy_set(EnergyProfile(H), 1.0, (2.0, 3.0))
    assert clipped.full


def test_threshold_above_max_gives_empty():
    H = random_ball(1)
    I = (H.spectrum[-1] + 2, H.spectrum[-1] + 3)
    cov = singular_energy_set(EnergyProfile(H), 10.0, I)
    assert cov.empty and cov.total_length == 0.0


def test_cover_preconditions():
    H = random_ball(1)
    P = EnergyProfile(H)
    with pytest.raises(DomainError):
        singular_energy_set(P, 0.0, (0, 1))
    with pytest.raises(DomainError):
        singular_energy_set(P, 1.0, (0, 2))
    with pytest.raises(DomainError):
        singular_energy_set(P, 1.0, (1, 1))


def test_profile_eigen_and_solve_agree():
    H = random_ball(2)
    P = EnergyProfile(H)
    for E in np.linspace(H.spectrum[0] - 1, H.spectrum[-1] + 1, 17):
        if np.min(np.abs(H.spectrum - E)) > 1e-6:
            assert float(P(E)) == pytest.approx(P.direct(E), rel=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_cover_matches_dense_grid(seed):
    H = random_ball(seed)
    P = EnergyProfile(H)
    I = unit_window(H, seed)
    a = 0.5
    cov = singular_energy_set(P, a, I)
    ref, h = grid_reference(P, a, I)
    got = cov.intervals
    # intervals shorter than the grid step can hide from the reference
    got = got[(got[:, 1] - got[:, 0] > 2 * h) | (got[:, 0] == I[0]) | (got[:, 1] == I[1])]
    assert got.shape[0] == len(ref)
    assert np.max(np.abs(got - np.array(ref).reshape(-1, 2)), initial=0.0) <= 1e-9


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.floats(0.05, 5.0))
def test_cover_invariants(seed, a):
    H = random_ball(seed % 97, N=1 + seed % 2)
    P = EnergyProfile(H)
    I = unit_window(H, seed)
    cov = singular_energy_set(P, a, I)
    assert cov.raw_count < 3 * cov.K ** 2
    grid = np.linspace(I[0], I[1], 2001)
    hot = grid[P(grid) >= a]
    assert np.all(cov.contains(hot))
    poles = H.spectrum
    for e in cov.intervals.ravel():
        if e in I or np.min(np.abs(poles - e)) < 1e-9:
            continue
        assert float(P(e)) == pytest.approx(a, rel=1e-8)


def test_kappa_mass_drives_derivative_bound():
    H = random_ball(4)
    P = EnergyProfile(H)
    c = 0.05
    I = unit_window(H, 4)
    far = far_set(H.spectrum, c, I)
    K = P.K
    for f in P.functions:
        assert np.abs(f.kappas).sum() <= K
        for lo, hi in far:
            E = np.linspace(lo, hi, 50)
            assert np.all(np.abs(f.derivative(E)) <= K / c ** 2)


def test_interval_helpers():
    assert merge_intervals([(0, 1), (0.5, 2), (3, 4)]).tolist() == [[0, 2], [3, 4]]
    A = np.array([[0.0, 1.0], [5.0, 6.0]])
    assert min_gap(A, np.array([[2.0, 3.0]])) == 1.0
    assert min_gap(A, np.array([[0.5, 0.7]])) == 0.0
    assert min_gap(A, np.zeros((0, 2))) == math.inf
    assert far_set(np.array([0.5]), 0.1, (0.0, 1.0)).tolist() == [[0.0, 0.4], [0.6, 1.0]]


# --- shift covariance

def test_shift_zero_is_identity():
    H = random_ball(5)
    assert shift_covariance_check(H, [0.0], 0.5, unit_window(H, 5)) == 0.0


def test_shift_single_pole_exact():
    H = single_site(0.5)
    for t in (0.1, -1.0):
        moved = cover_for(H.shifted(t), 4.0, (2.0 + t, 3.0 + t))
        assert moved.intervals[0] == pytest.approx([2.25 + t, 2.75 + t], abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_shift_random_ball(seed):
    H = random_ball(seed)
    drift = shift_covariance_check(H, [0.1, -0.1, 1.0, -1.0], 0.3, unit_window(H, seed))
    assert drift <= 1e-9


# --- event B

def test_event_b_trivial_cases():
    I = (50.0, 51.0)
    sure = measure_event_B(Z, at(0), 2, 100.0, 0.0, 0.5, I, 20, 0)
    assert sure.event.value == 1.0
    never = measure_event_B(Z, at(0), 2, 100.0, 0.01, 1.0, I, 20, 0)
    assert never.event.value == 0.0
    with pytest.raises(DomainError):
        measure_event_B(Z, at(0), 2, 100.0, 0.01, 0.0, I, 20, 0)


def test_event_b_chebyshev_chain():
    est = measure_event_B(Z, at(0), 3, 100.0, 0.02, 0.05, (50.0, 51.0), 300, 1)
    assert est.holds
    assert est.event.value <= est.chebyshev_bound + 3 * est.event.stderr


def test_cover_trials_share_event_b_samples():
    I = (50.0, 51.0)
    rows = cover_trials(Z, at(0), 3, 100.0, 0.02, 0.05, I, 30, 1, t_grid=[0.1])
    est = measure_event_B(Z, at(0), 3, 100.0, 0.02, 0.05, I, 30, 1)
    assert np.mean([r.event_B for r in rows]) == est.event.value
    assert np.mean([r.total_length for r in rows]) == pytest.approx(est.mean_measure)
    assert all(r.shift_drift <= 1e-9 for r in rows)


# --- two volumes

def test_default_schedule():
    p = MsaParams()
    L, k = 8, 0
    a, b, c = default_abc(p, k, L)
    assert a == pytest.approx(L ** (-3 * p.kappa / 5))
    assert b == pytest.approx(L ** (-p.kappa / 5))
    assert c == pytest.approx(L ** (-(p.kappa / 5 - p.d / 2)))
    a1, _, _ = default_abc(p, 2, L)
    assert a1 == pytest.approx(L ** (-3 * p.kappa / 5 * (1 + p.theta) ** 2))


def test_far_window_gives_no_event():
    rep = two_volume_variable_energy(Z, at(-10), at(10), 2, 10.0, 1.0, 0.1, (-3.0, -2.0), 40,
                                     0, route="CPT")
    assert rep.event.value == 0.0


def test_cpt_route_bound():
    rep = two_volume_variable_energy(Z, at(-10), at(10), 2, 100.0, 0.05, 0.05, (50.0, 51.0),
                                     300, 2, route="CPT")
    assert rep.holds
    assert rep.containment_violations == 0


def test_etv_route():
    a, c = 0.5, 0.5
    K = 5
    b = a * c * c / K
    assert check_abc(a, b, c, K)
    rep = two_volume_variable_energy(Z, at(-10), at(10), 2, 100.0, a, b, (50.0, 51.0), 200, 3,
                                     route="ETV", c=c)
    assert rep.holds and rep.containment_violations == 0
    # the default schedule at a desk-size ball breaks b <= a c^2 / K
    a0, b0, c0 = default_abc(MsaParams(), 0, 2)
    assert not check_abc(a0, b0, c0, K)
    with pytest.raises(DomainError):
        two_volume_variable_energy(Z, at(-10), at(10), 2, 100.0, a0, b0, (50.0, 51.0), 5, 0,
                                   route="ETV", c=c0)
    with pytest.raises(DomainError):
        two_volume_variable_energy(Z, at(-10), at(10), 2, 100.0, a, b, (50.0, 51.0), 5, 0,
                                   route="ETV")


def test_route_preconditions():
    with pytest.raises(DomainError):
        two_volume_variable_energy(Z, at(0), at(1), 2, 1.0, 0.5, 0.01, (0.0, 1.0), 5, 0,
                                   route="ETV", c=0.5)
    with pytest.raises(DomainError):
        two_volume_variable_energy(Z, at(0), at(0), 2, 1.0, 0.5, 0.01, (0.0, 1.0), 5, 0,
                                   route="CPT")
    with pytest.raises(DomainError):
        two_volume_variable_energy(Z, at(-9), at(9), 2, 1.0, 0.5, 0.01, (0.0, 1.0), 5, 0,
                                   route="XYZ")
