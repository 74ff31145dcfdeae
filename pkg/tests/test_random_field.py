import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from mpmsa.errors import DomainError
from mpmsa.random_field import (Bernoulli, Gaussian, PotentialSample, Uniform, derive_seed,
                                estimate_conditional_modulus, holder_check, make_marginal,
                                mean_fluctuation_decompose, rng_for, sample_potential,
                                sup_window_fraction)


def test_seed_derivation_is_stable():
    assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)
    assert derive_seed(0, 1) != derive_seed(0, "1")
    assert 0 <= derive_seed(2**70, -5) < 2**64


def test_same_seed_same_sample():
    a = sample_potential(Uniform(), [5, 1, 3], 42)
    b = sample_potential(Uniform(), [3, 5, 1], 42)
    assert a.support.tolist() == [1, 3, 5]
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_potential(Uniform(), [1, 3, 5], 43).values)


def test_uniform_mean_within_three_sigma():
    V = sample_potential(Uniform(), range(100_000), 7)
    sigma = (1 / math.sqrt(12)) / math.sqrt(1e5)
    assert abs(V.values.mean() - 0.5) <= 3 * sigma


def test_holder_metadata():
    assert Uniform(0, 2).holder == (0.5, 1.0)
    assert Gaussian(0, 2).holder[0] == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)))
    assert not Bernoulli().satisfies_holder
    assert Uniform().satisfies_holder


def test_make_marginal():
    assert make_marginal("gaussian", sigma=2.0) == Gaussian(0.0, 2.0)
    with pytest.raises(DomainError):
        make_marginal("cauchy")
    with pytest.raises(DomainError):
        Uniform(1, 1)
    with pytest.raises(DomainError):
        Bernoulli(1.0)


def test_sample_lookup():
    V = sample_potential(Gaussian(), [2, 4, 6], 1)
    assert V[4] == V.values[1]
    assert V.covers([2, 6]) and not V.covers([3])
    with pytest.raises(DomainError):
        V.at([3])
    assert np.isnan(V.dense(8)[0])
    with pytest.raises(DomainError):
        sample_potential(Uniform(), [], 0)


# --- mean and fluctuations

def test_constant_sample():
    V = PotentialSample(np.arange(4), np.full(4, 2.5), 0)
    mf = mean_fluctuation_decompose(V, range(4))
    assert mf.xi == 2.5 and np.all(mf.eta == 0)


def test_two_point_sample():
    V = PotentialSample(np.arange(2), np.array([0.0, 1.0]), 0)
    mf = mean_fluctuation_decompose(V, [0, 1])
    assert mf.xi == 0.5
    assert mf.eta.tolist() == [-0.5, 0.5]


def test_decompose_outside_support():
    V = sample_potential(Uniform(), [0, 1, 2], 0)
    with pytest.raises(DomainError):
        mean_fluctuation_decompose(V, [1, 7])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
def test_decomposition_identity(vals):
    vals = np.asarray(vals)
    V = PotentialSample(np.arange(vals.size), vals, 0)
    mf = mean_fluctuation_decompose(V, np.arange(vals.size))
    scale = max(1.0, np.abs(vals).max())
    assert abs(mf.eta.sum()) <= 1e-12 * vals.size * scale
    assert np.allclose(mf.xi + mf.eta, vals, rtol=0, atol=1e-15 * scale * 4)
    assert abs(mf.xi * vals.size + mf.eta.sum() - vals.sum()) <= 1e-12 * vals.size * scale


def test_gaussian_mean_independent_of_fluctuations():
    n, trials = 5, 10_000
    X = rng_for(3).normal(size=(trials, n))
    xi = X.mean(axis=1)
    eta = X - xi[:, None]
    for j in range(n):
        r = np.corrcoef(xi, eta[:, j])[0, 1]
        assert abs(r) <= 3 / math.sqrt(trials)


# --- continuity modulus

def test_sup_window_fraction():
    assert sup_window_fraction(np.array([0.0, 0.1, 0.2, 1.0]), 0.2) == 0.75
    assert sup_window_fraction(np.array([0.0, 1.0]), 0.0) == 0.0
    assert sup_window_fraction(np.array([]), 0.5) == 0.0


def test_modulus_at_zero():
    est = estimate_conditional_modulus(Uniform(), 3, 0.0, 10, 0)
    assert np.all(est.values == 0)


@pytest.mark.parametrize("size,s", [(1, 0.05), (4, 0.05), (9, 0.02)])
def test_gaussian_modulus_matches_density_bound(size, s):
    est = estimate_conditional_modulus(Gaussian(), size, s, 20, 1, resamples=50_000)
    # sup density of the mean of `size` unit normals, times s
    density = math.sqrt(size) / math.sqrt(2 * math.pi)
    assert np.allclose(est.analytic, 2 * norm.cdf(s * math.sqrt(size) / 2) - 1)
    assert est.analytic.mean() == pytest.approx(density * s, rel=1e-3)
    # the empirical window maximum carries an upward bias of order sqrt(p / resamples)
    slack = 4 * math.sqrt(density * s / 50_000) + 3 * est.stderr
    assert density * s - 3 * est.stderr <= est.mean <= density * s + slack


def test_uniform_pair_interval_law():
    s = 0.05
    est = estimate_conditional_modulus(Uniform(), 2, s, 50, 4, resamples=50_000)
    for i in range(50):
        base = Uniform().sample(rng_for(derive_seed(4, "modulus", i)), 2)
        length = 1 - abs(base[0] - base[1])   # 1 - 2|eta|
        assert est.analytic[i] == pytest.approx(min(1.0, s / length))
    assert abs(est.mean - est.analytic.mean()) <= 0.01


def test_rejection_agrees_with_exact_uniform():
    ex = estimate_conditional_modulus(Uniform(), 2, 0.1, 10, 9, resamples=4000)
    rj = estimate_conditional_modulus(Uniform(), 2, 0.1, 10, 9, resamples=4000,
                                      method="rejection", band=5e-3)
    assert abs(rj.mean - ex.analytic.mean()) <= 0.05


def test_bernoulli_degenerate_conditional():
    # two sites: unequal values pin the mean given the fluctuations
    est = estimate_conditional_modulus(Bernoulli(), 2, 0.1, 20, 0, resamples=50)
    pinned = 0
    for i in range(20):
        base = Bernoulli().sample(rng_for(derive_seed(0, "modulus", i)), 2)
        if base[0] != base[1]:
            pinned += 1
            assert est.values[i] == 1.0
    assert est.degenerate == pinned > 0


def test_modulus_bad_input():
    with pytest.raises(DomainError):
        estimate_conditional_modulus(Uniform(), 0, 0.1, 10, 0)
    with pytest.raises(DomainError):
        estimate_conditional_modulus(Uniform(), 2, -0.1, 10, 0)


# --- Hölder check

def test_holder_uniform():
    row, = holder_check(Uniform(), [0.01], 200_000, 0)
    assert row.empirical == pytest.approx(0.01, abs=4 * row.stderr)
    assert row.ok


def test_holder_gaussian_against_normal_cdf():
    s = 0.01
    row, = holder_check(Gaussian(), [s], 200_000, 0)
    exact = 2 * norm.cdf(s / 2) - 1          # window centred at the mode
    assert exact == pytest.approx(s / math.sqrt(2 * math.pi), rel=1e-4)
    assert row.empirical == pytest.approx(exact, abs=5 * row.stderr)
    assert row.ok


def test_holder_rejects_bernoulli():
    with pytest.raises(DomainError):
        holder_check(Bernoulli(), [0.1], 100, 0)
