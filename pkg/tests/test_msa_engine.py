import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpmsa.errors import CapacityError, ConfigError, DomainError
from mpmsa.graph_core import build_lattice_segment
from mpmsa.hamiltonian import assemble
from mpmsa.mp_geometry import MpBall
from mpmsa.msa_engine import (BinomialCount, Estimate, MsaParams, ScaleEstimates,
                              calibrate_lemma_floor, gamma, gamma_graded, HarnessRun,
                              inner_ball_centers, inner_hamiltonian, is_E_resonant,
                              is_E_tunneling, lemma_nr_nt_ns_run, mc_estimate_scale, ns_check,
                              pitrons_run, resonance_threshold, scale_sequence,
                              spectral_gap_between, target_exponent, two_volume_distance_curve,
                              verify_lemma_nr_nt_ns, verify_recursion, wegner_curve)
from mpmsa.random_field import Bernoulli, Uniform, sample_potential

Z = build_lattice_segment(1, 30)
O = Z.index(0)
PAR = MsaParams()


def at(*labels):
    return tuple(Z.index(v) for v in labels)


def ball_H(center, L, g, seed):
    ball = MpBall(Z, center, L)
    V = sample_potential(Uniform(), ball.support, seed)
    return assemble(ball, Z, g, V)


# --- parameters and scales

def test_default_parameters():
    p = PAR.validate()
    assert (p.alpha, p.beta, p.tau) == (1.5, 0.5, 0.125)
    # (1 + 1/6) / (3/2) from the defining formula
    assert p.ns_exponent == pytest.approx(7 / 9)
    assert p.kappa > p.kappa_floor == pytest.approx(12.0)


@pytest.mark.parametrize("kw", [{"alpha": 2.0}, {"kappa": 12.0}, {"theta": 0.5},
                                {"m": 0.0}, {"L0": 1}])
def test_parameter_constraints(kw):
    with pytest.raises(ConfigError):
        MsaParams(**kw).validate()


def test_scale_sequence():
    assert scale_sequence(4, 1.5, 3) == [4, 8, 22, 103]
    with pytest.raises(DomainError):
        scale_sequence(2, 1.5, 1)
    with pytest.raises(CapacityError):
        scale_sequence(4, 1.5, 8, cap=1000)
    slow, fast = scale_sequence(5, 1.5, 3), scale_sequence(5, 1.99, 3)
    assert all(a <= b for a, b in zip(slow, fast))


def test_target_exponent():
    assert target_exponent(PAR, 2, 0) == PAR.kappa
    p3 = MsaParams(N_hat=3, kappa=40.0)
    assert target_exponent(p3, 1, 0) == 9 * p3.kappa
    for k in range(4):
        assert target_exponent(p3, 1, k) == pytest.approx(3 * target_exponent(p3, 2, k))
    with pytest.raises(DomainError):
        target_exponent(PAR, 3, 0)


def test_gamma_forms():
    assert gamma(1.0, 256) == pytest.approx(1.5)
    assert gamma_graded(1.0, 256, 2, 2) == pytest.approx(1.5)
    assert gamma_graded(1.0, 256, 1, 2) == pytest.approx(2.25)


# --- resonance

def test_resonance_strict():
    L = 9.0
    thr = resonance_threshold(L, 0.5)
    assert is_E_resonant([1.0, 2.0], 2.0, L)
    assert not is_E_resonant([2 * thr], 0.0, L)
    assert not is_E_resonant([thr], 0.0, L)
    assert is_E_resonant([thr * (1 - 1e-12)], 0.0, L)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.floats(-10, 10),
       st.floats(0, 5))
def test_resonance_monotone_in_distance(spec, E, push):
    spec = np.array(spec)
    if not is_E_resonant(spec, E, 4.0):
        # moving every eigenvalue further from E keeps it non-resonant
        moved = spec + np.sign(spec - E) * push
        moved[spec == E] = spec[spec == E]
        assert not is_E_resonant(moved, E, 4.0)


# --- non-singularity

def test_ns_vacuous_when_no_pair_qualifies():
    p = MsaParams(varrho=2.0)          # threshold L^2 exceeds the ball diameter
    H = ball_H(at(0), 3, 10.0, 0)
    r = ns_check(H, -5.0, 1.0, p)
    assert r.vacuous and r.ns and r.n_pairs == 0


def test_ns_resonant_is_singular():
    H = ball_H(at(0), 4, 10.0, 0)
    r = ns_check(H, float(H.spectrum[3]), 1.0, PAR)
    assert r.resonant and not r.ns


def test_ns_against_direct_bound():
    H = ball_H(at(0, 5), 2, 30.0, 3)
    E = 17.3
    r = ns_check(H, E, 1.0, PAR)
    ball = H.ball
    G = np.linalg.inv(H.dense() - E * np.eye(H.dim))
    dB = ball.edge_boundary_size()
    L = ball.L
    ok = True
    for i, j in itertools.product(range(H.dim), repeat=2):
        x, y = ball.config_at(i), ball.config_at(j)
        rho = max(abs(Z.label(a) - Z.label(b)) for a, b in zip(x, y))
        if rho >= L ** PAR.ns_exponent:
            ok &= dB * abs(G[i, j]) <= math.exp(-gamma(1.0, L) * rho)
    assert r.ns == ok
    assert r.boundary_size == dB == 2 * 5 * 2


def test_strong_disorder_mostly_ns():
    est = mc_estimate_scale(Z, PAR, 1, 0, [0.0, 50.0], 100, 1)
    assert est.L_k == 8
    assert est.P_hat.value <= 0.1


def test_no_disorder_is_singular():
    est = mc_estimate_scale(Z, MsaParams(g=0.0), 1, 0, 2.0, 100, 1)
    assert est.P_hat.value == 1.0


def test_estimates_thread_invariant():
    a = mc_estimate_scale(Z, PAR, 1, 0, 40.0, 100, 5, threads=1)
    b = mc_estimate_scale(Z, PAR, 1, 0, 40.0, 100, 5, threads=3)
    assert a == b
    with pytest.raises(DomainError):
        mc_estimate_scale(Z, PAR, 1, 0, 40.0, 10, 5)


# --- tunneling

def brute_tunneling(H, E, L_in):
    outer = H.ball
    sing = []
    for w in itertools.product(*[range(Z.n)] * outer.N):
        b = MpBall(Z, w, L_in)
        if not outer.contains_ball(b):
            continue
        if not ns_check(inner_hamiltonian(H, b), E, 1.0, PAR, ball=b).ns:
            sing.append(b)
    return any(a.disjoint_from(b) for a, b in itertools.combinations(sing, 2))


@pytest.mark.parametrize("seed,g", [(0, 0.0), (1, 3.0), (2, 8.0), (3, 30.0), (4, 100.0)])
def test_tunneling_matches_bruteforce(seed, g):
    H = ball_H(at(0), 8, g, seed)
    E = float(np.random.default_rng(seed).uniform(0, g + 4))
    assert is_E_tunneling(H, E, 1.0, 2, PAR).tunneling == brute_tunneling(H, E, 2)


def test_tunneling_constructed():
    # free particle: every inner ball is singular, and centres 2L+1 apart are disjoint
    H = ball_H(at(0), 6, 0.0, 0)
    res = is_E_tunneling(H, 2.0, 1.0, 2, PAR)
    assert res.tunneling
    a, b = res.pair
    assert MpBall(Z, a, 2).disjoint_from(MpBall(Z, b, 2))


def test_no_singular_inner_ball():
    H = ball_H(at(0), 8, 100.0, 0)
    res = is_E_tunneling(H, -60.0, 1.0, 2, PAR)
    assert not res.tunneling and res.singular_centers == ()
    assert res.n_inner == len(inner_ball_centers(H.ball, 2)) == 13


# --- lemma harnesses

def test_lemma_vacuous_when_resonant():
    H = ball_H(at(0), 8, 10.0, 0)
    f = verify_lemma_nr_nt_ns(H, float(H.spectrum[2]), 1.0, 3, PAR)
    assert not f.hypothesis and not f.counterexample


def test_lemma_harness_strong_disorder():
    run = lemma_nr_nt_ns_run(1, 3, 1000.0, 20, 0, PAR)
    assert run.hypothesis_true > 0
    assert run.counterexamples == 0


def test_lemma_small_scale_exploratory():
    # below the validity floor violations may occur; they are reported, not raised
    run = lemma_nr_nt_ns_run(1, 3, 100.0, 40, 0, PAR)
    assert 0 <= run.counterexamples <= run.hypothesis_true <= 40


def test_pitrons_harness():
    run = pitrons_run(3, 1000.0, 10, 0, PAR)
    assert all(f.details["spectrum_residual"] <= 1e-9 for f in run.findings)
    assert run.hypothesis_true > 0 and run.counterexamples == 0


def test_calibration_picks_first_clean_candidate():
    from mpmsa.msa_engine import Finding

    def fake(scale, trials, seed):
        bad = scale < 5
        return HarnessRun("fake", scale, (Finding(True, not bad), Finding(False, None)))

    cal = calibrate_lemma_floor(fake, [3, 4, 5, 6], 2, 0)
    assert cal.floor == 5
    assert cal.pilots == ((3, 1, 1), (4, 1, 1), (5, 1, 0))
    assert calibrate_lemma_floor(fake, [3], 2, 0).floor is None


# --- recursion

def _est(k, L, P, Q, S, n=100):
    se = lambda p: math.sqrt(p * (1 - p) / n)
    return ScaleEstimates(k, L, Estimate(P, se(P), n), Estimate(Q, 4 * se(Q / 4), n),
                          None if S is None else Estimate(S, se(S), n), 0.0, (0.0,))


def test_recursion_degenerate_pk_zero():
    rep = verify_recursion(_est(0, 8, 0.0, 0.0, None), _est(1, 22, 0.05, 0.2, 0.0), PAR, 2)
    assert rep.rhs == pytest.approx(0.25 * 0.2)
    assert rep.holds


def test_recursion_violation_detected():
    rep = verify_recursion(_est(0, 8, 0.0, 0.0, None), _est(1, 22, 0.9, 0.0, 0.0), PAR, 2)
    assert not rep.holds and rep.margin < 0
    with pytest.raises(DomainError):
        verify_recursion(_est(0, 8, 0, 0, None), _est(2, 22, 0, 0, 0), PAR, 2)


def test_binomial_merge():
    a = BinomialCount(3, 10).merge(BinomialCount(1, 5))
    assert (a.hits, a.trials) == (4, 15)
    assert BinomialCount().stderr == 0.0


# --- Wegner and two volumes

def test_wegner_saturation_and_linearity():
    ball_c = at(0, 3)
    s_grid = [1e-2, 1e-1, 1e3]
    curve = wegner_curve(Z, ball_c, 2, 1.0, 4.0, s_grid, 400, 0)
    assert curve.rows[-1].p == 1.0
    assert np.all(curve.distances >= 0)


def test_wegner_bernoulli_has_atoms():
    # integer potentials with g = 1: many samples share a spectrum exactly
    curve = wegner_curve(Z, at(0), 1, 1.0, 2.5, [1e-3], 400, 0, marginal=Bernoulli())
    vals, counts = np.unique(np.round(curve.distances, 12), return_counts=True)
    assert counts.max() >= 20


def test_spectral_gap_between():
    assert spectral_gap_between(np.array([0.0, 5.0]), np.array([1.5, 4.0])) == 1.0
    assert spectral_gap_between(np.array([2.0]), np.array([7.0])) == 5.0


def test_two_volume_identical_balls():
    with pytest.raises(DomainError):
        two_volume_distance_curve(Z, at(0), at(0), 2, 1.0, [0.1], 5, 0)
    c = two_volume_distance_curve(Z, at(0), at(0), 2, 1.0, [0.0, 0.1], 5, 0, require="none")
    assert all(r.p == 1.0 for r in c.rows)


def test_two_volume_symmetric():
    a = two_volume_distance_curve(Z, at(-10), at(10), 2, 1.0, [0.01], 50, 3)
    b = two_volume_distance_curve(Z, at(10), at(-10), 2, 1.0, [0.01], 50, 3)
    assert np.array_equal(a.distances, b.distances)
