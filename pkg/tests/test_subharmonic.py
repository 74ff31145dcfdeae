import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpmsa.errors import DomainError, ResonanceError
from mpmsa.graph_core import build_lattice_segment
from mpmsa.msa_engine import MsaParams, gamma
from mpmsa.subharmonic import (check_lq_subharmonic, check_separately_subharmonic,
                               green_subharmonicity_certificate, inner_centers, radial_bound,
                               radial_bound_for, radial_exponent, two_point_bound)

P = build_lattice_segment(1, 15)
O = P.index(0)


def brute_check(f, G, center, L, ell, q):
    """Independent full scan over every vertex with its ell-ball inside the L-ball."""
    for x in range(G.n):
        if G.distance(center, x) > L:
            continue
        if any(G.distance(center, z) > L for z in range(G.n) if G.distance(x, z) <= ell):
            continue
        m = max(abs(f[z]) for z in range(G.n) if G.distance(x, z) <= ell + 1)
        if abs(f[x]) > q * m * (1 + 1e-12):
            return False
    return True


def test_zero_function_verified():
    assert check_lq_subharmonic(np.zeros(P.n), P, O, 5, 1, 0.01).verified


def test_constant_function_fails():
    cert = check_lq_subharmonic(np.full(P.n, 2.0), P, O, 5, 1, 0.9)
    assert not cert.verified and cert.witness is not None


def test_validation():
    with pytest.raises(DomainError):
        check_lq_subharmonic(np.zeros(P.n), P, O, 1, 2, 0.5)
    with pytest.raises(DomainError):
        check_lq_subharmonic(np.zeros(P.n), P, O, 20, 1, 0.5)


def test_inner_centers_containment():
    xs = inner_centers(P, O, 4, 1)
    assert [P.label(x) for x in xs] == [-3, -2, -1, 0, 1, 2, 3]


@given(st.integers(0, 2**31), st.integers(0, 3), st.floats(0.05, 0.95))
def test_check_agrees_with_full_scan(seed, ell, q):
    rng = np.random.default_rng(seed)
    x0 = int(rng.integers(P.n))
    # decaying profile plus noise so both outcomes occur
    f = q ** (np.abs(np.arange(P.n) - x0) / (ell + 1)) * rng.uniform(0.5, 1.5, P.n)
    L = int(rng.integers(ell, 8))
    cert = check_lq_subharmonic(f, P, O, L, ell, q)
    assert cert.verified == brute_check(f, P, O, L, ell, q)


def test_radial_exponent_arithmetic():
    cert = check_lq_subharmonic(np.zeros(P.n), P, O, 3, 0, 0.5)
    assert radial_bound(cert, 1.0).global_bound == 1 / 16
    cert = check_lq_subharmonic(np.zeros(P.n), P, O, 2, 2, 0.3)
    assert radial_bound(cert, 2.0).global_bound == pytest.approx(0.6)
    assert radial_exponent(12, 3) == 3


def test_radial_bound_needs_verified():
    cert = check_lq_subharmonic(np.ones(P.n), P, O, 3, 0, 0.5)
    with pytest.raises(DomainError):
        radial_bound(cert, 1.0)


@pytest.mark.parametrize("ell,L", [(0, 6), (1, 7), (2, 9)])
def test_geometric_profile(ell, L):
    x0 = P.index(12)
    f = 2.0 ** -np.array([P.distance(v, x0) for v in range(P.n)], dtype=float)
    # each step of ell+1 toward x0 doubles f, so q = 2^-(ell+1) works
    q = 2.0 ** -(ell + 1)
    cert = check_lq_subharmonic(f, P, O, L, ell, q)
    assert cert.verified
    rb = radial_bound_for(f, P, cert)
    assert f[O] <= rb.local_bound <= rb.global_bound


def test_two_point_trivial_cases():
    u1, u2 = P.index(-6), P.index(6)
    assert two_point_bound(P, u1, 2, u2, 2, 2, 0.3, 1.0) == pytest.approx(0.09)
    assert two_point_bound(P, u1, 4, u2, 4, 1, 1.0, 5.0) == 5.0
    with pytest.raises(DomainError):
        two_point_bound(P, u1, 6, u2, 6, 1, 0.5, 1.0)


@pytest.mark.parametrize("ell", [0, 1])
def test_two_point_product(ell):
    a, b = P.index(-13), P.index(13)
    g = 2.0 ** -np.array([P.distance(v, a) for v in range(P.n)], dtype=float)
    h = 2.0 ** -np.array([P.distance(v, b) for v in range(P.n)], dtype=float)
    F = np.outer(g, h)
    q = 2.0 ** -(ell + 1)
    u1, u2, r = P.index(-4), P.index(4), 3
    assert check_separately_subharmonic(F, P, u1, r, u2, r, ell, q)
    assert F[u1, u2] <= two_point_bound(P, u1, r, u2, r, ell, q, F.max())


def test_gamma_reference_value():
    assert gamma(1.0, 256, 0.125) == pytest.approx(1.5)
    assert math.exp(-gamma(1.0, 256, 0.125) * 256) == pytest.approx(math.exp(-384))


def test_green_certificate_vacuous_case():
    # weak disorder: an inner ball is singular, so nothing is asserted
    G = build_lattice_segment(1, 20)
    pot = np.zeros(G.n)
    res = green_subharmonicity_certificate(G, pot, G.index(0), 12, 3, 0.9, 1.0, MsaParams())
    assert not res.hypothesis and res.verified is None and not res.counterexample


def test_green_certificate_resonant():
    G = build_lattice_segment(1, 20)
    pot = np.zeros(G.n)
    from mpmsa.graph_core import schrodinger
    E = float(np.linalg.eigvalsh(schrodinger(G, np.arange(G.n), pot))[3])
    with pytest.raises(ResonanceError):
        green_subharmonicity_certificate(G, pot, G.index(0), 12, 3, E, 1.0, MsaParams())


def test_green_certificate_strong_disorder():
    from mpmsa.experiment import subharmonic_instances
    res = subharmonic_instances(20, seed=1)
    assert sum(r.hypothesis for r in res) >= 3
    assert not any(r.counterexample for r in res)
