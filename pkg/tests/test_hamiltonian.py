import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpmsa.errors import DomainError, ResonanceError
from mpmsa.graph_core import build_lattice_segment, schrodinger
from mpmsa.hamiltonian import (Hamiltonian, Interaction, assemble, assemble_on, cluster_indices,
                               correlator_matrix, dump_coo, ef_correlator, green, green_matrix,
                               green_matrix_spectral, interaction_energy, load_coo,
                               pitrons_tensor_check, propagator_element, rational_coefficients)
from mpmsa.mp_geometry import MpBall, canonical_decomposition, configuration_graph
from mpmsa.random_field import PotentialSample, Uniform, sample_potential

Z = build_lattice_segment(1, 40)
U1 = Interaction(1, (1.0, 0.5))


def at(*labels):
    return tuple(Z.index(v) for v in labels)


def random_H(seed, N=2, L=2, g=3.0, U=U1, Zg=Z):
    rng = np.random.default_rng(seed)
    center = tuple(int(v) for v in rng.integers(-5, 6, N) + Zg.n // 2)
    ball = MpBall(Zg, center, L)
    V = sample_potential(Uniform(), ball.support, seed)
    return assemble(ball, Zg, g, V, U), V


# --- interaction

def test_interaction_close_pair():
    U = Interaction(1, (1.0, 1.0))
    assert interaction_energy(U, Z, at(0, 1, 5)) == 1.0
    assert interaction_energy(U, Z, at(3)) == 0.0


@given(st.lists(st.integers(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-3, 3), min_size=1, max_size=4))
def test_interaction_pair_loop(x, vals):
    U = Interaction(len(vals) - 1, tuple(vals))
    ref = 0.0
    for i, j in itertools.combinations(range(3), 2):
        r = abs(x[i] - x[j])
        ref += vals[r] if r < len(vals) else 0.0
    assert interaction_energy(U, Z, at(*x)) == pytest.approx(ref, abs=1e-12)


def test_interaction_validation():
    with pytest.raises(DomainError):
        Interaction(2, (1.0,))
    with pytest.raises(DomainError):
        Interaction(-1, ())
    assert Interaction.none().is_zero


# --- assembly

def test_single_vertex():
    ball = MpBall(Z, at(0), 0)
    V = PotentialSample(np.array([Z.index(0)]), np.array([0.7]), 0)
    H = assemble(ball, Z, 2.0, V)
    assert H.dense().tolist() == [[2 + 2.0 * 0.7]]


def test_free_spectrum_gershgorin():
    ball = MpBall(Z, at(0, 3), 3)
    V = sample_potential(Uniform(), ball.support, 0)
    H = assemble(ball, Z, 0.0, V)
    assert H.spectrum.min() >= -1e-12
    assert H.spectrum.max() <= 2 * 2 * 2 + 1e-12   # N times twice the max degree


@pytest.mark.parametrize("seed", range(4))
def test_noninteracting_kronecker_sums(seed):
    H, V = random_H(seed, U=Interaction.none())
    ball = H.ball
    single = [np.linalg.eigvalsh(schrodinger(Z, f, 3.0 * V.dense(Z.n, 0.0))) for f in ball.factors]
    sums = np.sort(np.add.outer(*single).ravel())
    assert np.max(np.abs(H.spectrum - sums)) <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_assembly_against_product_graph(seed):
    Zs = build_lattice_segment(1, 5)
    H, V = random_H(seed, L=1, Zg=Zs)
    C = configuration_graph(Zs, 2)
    rows = [C.index(tuple(c)) for c in H.configs.tolist()]
    Vd = V.dense(Zs.n, 0.0)
    pot = np.array([3.0 * sum(Vd[v] for v in c) + interaction_energy(U1, Zs, tuple(c))
                    for c in C.labels])
    ref = schrodinger(C, rows, pot)
    assert np.allclose(H.dense(), ref, atol=1e-13)
    H2 = assemble_on(Zs, H.configs, 3.0, V, U1)
    assert np.allclose(H2.matrix.toarray() if not H2.is_dense else H2.matrix, H.dense())


def test_assemble_needs_support():
    ball = MpBall(Z, at(0, 5), 1)
    V = sample_potential(Uniform(), [Z.index(0)], 0)
    with pytest.raises(DomainError):
        assemble(ball, Z, 1.0, V)


@pytest.mark.parametrize("seed", range(3))
def test_eigen_invariants(seed):
    H, _ = random_H(seed)
    vals, Q = H.eigen
    M = H.dense()
    assert np.max(np.abs(Q.T @ Q - np.eye(H.dim))) <= 1e-10
    assert np.max(np.abs(M - (Q * vals) @ Q.T)) <= 1e-9 * np.abs(M).max()
    S = H.shifted(1.25)
    assert np.max(np.abs(S.spectrum - (H.spectrum + 1.25))) <= 1e-12
    _, Qs = S.eigen
    assert np.allclose(np.abs(np.sum(Qs * Q, axis=0)), 1.0, atol=1e-8)


# --- Green functions

def test_green_one_by_one():
    H = Hamiltonian(Z, np.array([[0]]), np.array([[0.4]]))
    G = green(H, 1.5, 0, 0)
    assert G.value == pytest.approx(1 / (0.4 - 1.5), rel=1e-14)
    assert G.rational_value() == pytest.approx(G.value, rel=1e-14)


@pytest.mark.parametrize("seed", range(6))
def test_green_dual_route(seed):
    H, _ = random_H(seed)
    rng = np.random.default_rng(seed)
    E = float(rng.uniform(H.spectrum[0], H.spectrum[-1]))
    x, y = (int(v) for v in rng.integers(0, H.dim, 2))
    Gxy, Gyx = green(H, E, x, y), green(H, E, y, x)
    assert Gxy.value == pytest.approx(Gyx.value, rel=1e-10, abs=1e-14)
    assert abs(Gxy.value - Gxy.rational_value()) <= 1e-8 * max(abs(Gxy.value), 1e-300) + 1e-14
    assert Gxy.kappa_mass <= H.dim
    assert np.allclose(green_matrix(H, E), green_matrix_spectral(H, E), atol=1e-9)


def test_green_by_configuration():
    H, _ = random_H(0)
    x = H.ball.config_at(3)
    assert green(H, 0.123, x, x).value == green(H, 0.123, 3, 3).value


def test_green_resonant():
    H, _ = random_H(1)
    with pytest.raises(ResonanceError) as info:
        green(H, float(H.spectrum[4]), 0, 1)
    assert info.value.distance < 1e-8


@given(st.integers(0, 10_000))
def test_kappa_mass_bound(seed):
    H, _ = random_H(seed % 50, L=1)
    rng = np.random.default_rng(seed)
    x, y = (int(v) for v in rng.integers(0, H.dim, 2))
    poles, kap = rational_coefficients(H, x, y)
    assert np.abs(kap).sum() <= 1.0 + 1e-12   # Cauchy-Schwarz gives 1 <= |ball|


def test_degenerate_clusters_merge():
    # two decoupled identical sites give a doubly degenerate eigenvalue
    H = Hamiltonian(Z, np.array([[0], [1]]), np.diag([1.0, 1.0]))
    poles, kap = rational_coefficients(H, 0, 0)
    assert poles.tolist() == [1.0] and kap.tolist() == pytest.approx([1.0])
    assert len(cluster_indices(np.array([0.0, 1e-12, 1.0]))) == 2


# --- PI tensor identities

def test_tensor_identity_distant_clusters():
    L = 2
    u = at(-15, 15)
    ball = MpBall(Z, u, L)
    V = sample_potential(Uniform(), ball.support, 11)
    H = assemble(ball, Z, 5.0, V, U1)
    dec = canonical_decomposition(Z, u, L)
    rep = pitrons_tensor_check(H, dec, 7.3, V, U1)
    assert rep.interaction_split == 0
    assert rep.matrix_residual <= 1e-12   # g V summed in a different order
    assert rep.spectrum_residual <= 1e-9
    assert rep.worst_resolvent <= 1e-8


def test_tensor_identity_free_any_split():
    from mpmsa.mp_geometry import Decomposition
    ball = MpBall(Z, at(0, 1), 2)
    V = sample_potential(Uniform(), ball.support, 2)
    H = assemble(ball, Z, 1.0, V)
    rep = pitrons_tensor_check(H, Decomposition((1,), (0,), 0), 0.77, V)
    assert rep.spectrum_residual <= 1e-9 and rep.worst_resolvent <= 1e-8


def test_tensor_rejects_interacting_split():
    from mpmsa.mp_geometry import Decomposition
    ball = MpBall(Z, at(0, 1), 1)
    V = sample_potential(Uniform(), ball.support, 2)
    H = assemble(ball, Z, 1.0, V, U1)
    with pytest.raises(DomainError):
        pitrons_tensor_check(H, Decomposition((0,), (1,), 0), 0.5, V, U1)


# --- correlators and propagators

def test_correlator_parseval_and_empty():
    H, _ = random_H(3)
    assert ef_correlator(H, None, 5, 5) == pytest.approx(1.0, abs=1e-12)
    assert ef_correlator(H, (H.spectrum[-1] + 1, H.spectrum[-1] + 2), 5, 5) == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_correlator_dominates_propagator(seed):
    H, _ = random_H(seed)
    rng = np.random.default_rng(seed)
    I = tuple(sorted(rng.uniform(H.spectrum[0], H.spectrum[-1], 2)))
    vals, Q = H.eigen
    keep = (vals >= I[0]) & (vals <= I[1])
    for _ in range(5):
        x, y = (int(v) for v in rng.integers(0, H.dim, 2))
        t = float(rng.uniform(-50, 50))
        c = ef_correlator(H, I, x, y)
        # direct propagator on the spectral subspace
        P = (Q[:, keep] * np.exp(-1j * t * vals[keep])) @ Q[:, keep].T
        assert abs(P[x, y]) <= c + 1e-12
        assert propagator_element(H, t, x, y, I) == pytest.approx(abs(P[x, y]), abs=1e-12)
        assert 0.0 <= c <= 1.0 + 1e-12
        assert c == pytest.approx(ef_correlator(H, I, y, x), abs=1e-14)
        assert ef_correlator(H, (I[0] - 1, I[1] + 1), x, y) >= c - 1e-14


def test_propagator_unitarity():
    H, _ = random_H(5)
    assert propagator_element(H, 0.0, 4, 4) == pytest.approx(1.0, abs=1e-12)
    row = [propagator_element(H, 2.7, 4, y) for y in range(H.dim)]
    assert np.sum(np.square(row)) == pytest.approx(1.0, abs=1e-10)


def test_correlator_matrix_shape():
    H, _ = random_H(6)
    M = correlator_matrix(H, None, [0, 1], [2, 3, 4])
    assert M.shape == (2, 3)
    assert M[1, 2] == ef_correlator(H, None, 1, 4)


def test_coo_roundtrip():
    H, _ = random_H(7, L=1)
    assert np.array_equal(load_coo(dump_coo(H), H.dim), H.dense())
