"""Finite-volume multi-particle Hamiltonians H = -Delta^D + g V + U.

The kinetic part on a polydisk is the Kronecker sum of single-particle
Dirichlet Laplacians (ambient degrees), the potential at a configuration is
``sum_j V(x_j)`` and the interaction is a finite-range pair potential.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CapacityError, DomainError, ResonanceError
from .graph_core import Graph, LaplacianKind, laplacian
from .mp_geometry import Config, Decomposition, MpBall
from .random_field import PotentialSample

EIGEN_CAP = 4096
CLUSTER_TOL = 1e-10


def resonance_tol(E: float) -> float:
    return 1e-8 * (1.0 + abs(E))


def pair_distances(Z: Graph, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = np.empty(a.size, dtype=np.int64)
    for v in np.unique(a):
        m = a == v
        out[m] = Z.distances_from(int(v))[b[m]]
    return out


@dataclass(frozen=True)
class Interaction:
    """Pair potential with values U2(0..r0); zero beyond r0."""
    r0: int
    values: tuple = ()

    def __post_init__(self):
        if self.r0 < 0:
            raise DomainError("interaction range must be nonnegative")
        vals = tuple(float(v) for v in self.values)
        if len(vals) != self.r0 + 1:
            raise DomainError("need exactly r0 + 1 pair-potential values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def none(cls) -> "Interaction":
        return cls(0, (0.0,))

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def pair(self, r) -> np.ndarray:
        r = np.asarray(r)
        table = np.asarray(self.values)
        return np.where(r <= self.r0, table[np.minimum(r, self.r0)], 0.0)

    def energies(self, Z: Graph, configs: np.ndarray) -> np.ndarray:
        configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
        n, N = configs.shape
        total = np.zeros(n)
        if self.is_zero:
            return total
        for i in range(N):
            for j in range(i + 1, N):
                total += self.pair(pair_distances(Z, configs[:, i], configs[:, j]))
        return total


def interaction_energy(U: Interaction, Z: Graph, x: Config) -> float:
    return float(U.energies(Z, np.asarray([x]))[0])


def cluster_indices(values: np.ndarray, tol: float = CLUSTER_TOL) -> list[np.ndarray]:
    """Group sorted eigenvalues into runs whose consecutive gaps are <= tol."""
    if values.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(values) > tol) + 1
    return np.split(np.arange(values.size), breaks)


class Hamiltonian:
    """Symmetric matrix over an explicit list of configurations."""

    def __init__(self, Z: Graph, configs: np.ndarray, matrix, g: float = 0.0,
                 ball: MpBall | None = None, diagonal_potential: np.ndarray | None = None):
        self.Z = Z
        self.configs = np.asarray(configs, dtype=np.int64)
        self.matrix = matrix
        self.g = float(g)
        self.ball = ball
        self.diagonal_potential = diagonal_potential
        self.dim = self.configs.shape[0]
        self._index = None

    def __repr__(self):
        return f"Hamiltonian(dim={self.dim}, g={self.g})"

    @property
    def is_dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def dense(self) -> np.ndarray:
        if self.is_dense:
            return self.matrix
        if self.dim > EIGEN_CAP:
            raise CapacityError(f"dimension {self.dim} exceeds the dense cap",
                                size=self.dim, cap=EIGEN_CAP)
        return self.matrix.toarray()

    def index_of(self, x: Config) -> int:
        if self.ball is not None:
            return self.ball.index_of(tuple(x))
        if self._index is None:
            self._index = {tuple(c): i for i, c in enumerate(self.configs.tolist())}
        try:
            return self._index[tuple(int(v) for v in x)]
        except KeyError:
            raise DomainError(f"configuration {x} not in the domain") from None

    def _row(self, x) -> int:
        return int(x) if np.isscalar(x) else self.index_of(x)

    @cached_property
    def eigen(self) -> tuple[np.ndarray, np.ndarray]:
        vals, vecs = np.linalg.eigh(self.dense())
        return vals, vecs

    @cached_property
    def spectrum(self) -> np.ndarray:
        if "eigen" in self.__dict__:
            return self.eigen[0]
        return np.linalg.eigvalsh(self.dense())

    def spectral_distance(self, E: float) -> float:
        return float(np.min(np.abs(self.spectrum - E)))

    def shifted(self, t: float) -> "Hamiltonian":
        M = self.matrix + t * (np.eye(self.dim) if self.is_dense else sp.identity(self.dim))
        return Hamiltonian(self.Z, self.configs, M, self.g, self.ball, self.diagonal_potential)

    def restricted(self, rows: np.ndarray) -> np.ndarray:
        """Dirichlet restriction (principal submatrix) to the given rows."""
        rows = np.asarray(rows, dtype=np.int64)
        return self.dense()[np.ix_(rows, rows)]


def _finish(Z, configs, kinetic, g, V, U, ball):
    if not V.covers(np.unique(configs)):
        raise DomainError("potential support does not cover the domain")
    pot = g * V.at(configs.ravel()).reshape(configs.shape).sum(axis=1) + U.energies(Z, configs)
    n = configs.shape[0]
    if n <= EIGEN_CAP:
        M = kinetic.toarray() if sp.issparse(kinetic) else np.array(kinetic, dtype=float)
        M[np.diag_indices(n)] += pot
    else:
        M = (sp.csr_matrix(kinetic) + sp.diags(pot)).tocsr()
    return Hamiltonian(Z, configs, M, g=g, ball=ball, diagonal_potential=pot)


def kronecker_kinetic(Z: Graph, factors: Sequence[np.ndarray]):
    """Kronecker sum of single-particle Dirichlet Laplacians on the factor sets."""
    sizes = [f.size for f in factors]
    n = int(np.prod(sizes))
    total = sp.csr_matrix((n, n))
    for j, f in enumerate(factors):
        Lj = sp.csr_matrix(laplacian(Z, f, LaplacianKind.DIRICHLET))
        left = sp.identity(int(np.prod(sizes[:j])), format="csr")
        right = sp.identity(int(np.prod(sizes[j + 1:])), format="csr")
        total = total + sp.kron(sp.kron(left, Lj), right, format="csr")
    return total


def assemble(ball: MpBall, Z: Graph, g: float, V: PotentialSample,
             U: Interaction | None = None) -> Hamiltonian:
    """Hamiltonian on a polydisk; rows follow the ball's mixed-radix order."""
    U = U or Interaction.none()
    if not V.covers(ball.support):
        raise DomainError("potential support does not cover the ball")
    return _finish(Z, ball.configs(), kronecker_kinetic(Z, ball.factors), g, V, U, ball)


def assemble_on(Z: Graph, configs: np.ndarray, g: float, V: PotentialSample,
                U: Interaction | None = None) -> Hamiltonian:
    """Hamiltonian on an arbitrary set of configurations (Dirichlet: ambient degrees)."""
    U = U or Interaction.none()
    configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
    index = {tuple(c): i for i, c in enumerate(configs.tolist())}
    if len(index) != configs.shape[0]:
        raise DomainError("repeated configuration")
    rows, cols = [], []
    diag = np.zeros(configs.shape[0])
    for i, c in enumerate(configs.tolist()):
        diag[i] = sum(Z.degree[v] for v in c)
        for j, v in enumerate(c):
            for u in Z.adj[v]:
                y = list(c)
                y[j] = int(u)
                k = index.get(tuple(y))
                if k is not None:
                    rows.append(i)
                    cols.append(k)
    n = configs.shape[0]
    K = sp.csr_matrix((-np.ones(len(rows)), (rows, cols)), shape=(n, n)) + sp.diags(diag)
    return _finish(Z, configs, K, g, V, U, None)


@dataclass(frozen=True)
class GreenEntry:
    x: int
    y: int
    E: float
    value: float
    poles: np.ndarray
    kappas: np.ndarray

    def rational_value(self, E: float | None = None) -> float:
        E = self.E if E is None else E
        return float(np.sum(self.kappas / (self.poles - E)))

    @property
    def kappa_mass(self) -> float:
        return float(np.abs(self.kappas).sum())


def check_resonance(H: Hamiltonian, E: float, tol: float | None = None) -> float:
    dist = H.spectral_distance(E)
    if dist < (resonance_tol(E) if tol is None else tol):
        raise ResonanceError("energy resonant with the Hamiltonian", dist)
    return dist


def rational_coefficients(H: Hamiltonian, x, y, vectors: np.ndarray | None = None,
                          drop_zero: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Distinct poles and residues kappa = sum over a degenerate cluster of psi(x) psi(y)."""
    vals, vecs = H.eigen
    if vectors is not None:
        vecs = vectors
    i, j = H._row(x), H._row(y)
    prod = vecs[i] * vecs[j]
    groups = cluster_indices(vals)
    poles = np.array([vals[g].mean() for g in groups])
    kappas = np.array([prod[g].sum() for g in groups])
    if drop_zero:
        keep = kappas != 0.0
        poles, kappas = poles[keep], kappas[keep]
    return poles, kappas


def green(H: Hamiltonian, E: float, x, y) -> GreenEntry:
    check_resonance(H, E)
    i, j = H._row(x), H._row(y)
    e = np.zeros(H.dim)
    e[j] = 1.0
    if H.is_dense:
        col = np.linalg.solve(H.matrix - E * np.eye(H.dim), e)
        poles, kappas = rational_coefficients(H, i, j)
    else:
        col = spla.spsolve((H.matrix - E * sp.identity(H.dim)).tocsc(), e)
        poles, kappas = np.zeros(0), np.zeros(0)
    return GreenEntry(x=i, y=j, E=float(E), value=float(col[i]), poles=poles, kappas=kappas)


def green_matrix(H: Hamiltonian, E: float, check: bool = True) -> np.ndarray:
    """Full resolvent (H - E)^{-1} by LU inversion.

    LU keeps small far-off-diagonal entries accurate relative to their size
    much better than the spectral sum does, which matters for decay tests.
    """
    if check:
        check_resonance(H, E)
    return np.linalg.inv(H.dense() - E * np.eye(H.dim))


def green_matrix_spectral(H: Hamiltonian, E: float) -> np.ndarray:
    check_resonance(H, E)
    vals, vecs = H.eigen
    return (vecs / (vals - E)) @ vecs.T


@dataclass(frozen=True)
class TensorReport:
    interaction_split: float   # max |U(x) - U(x') - U(x'')| over the ball
    matrix_residual: float     # max |H - (H' (x) 1 + 1 (x) H'')|
    spectrum_residual: float   # max |sorted spectrum - sorted pair sums|
    eq_a_residual: float       # relative, resolvent from the first factor's projections
    eq_b_residual: float       # relative, resolvent from the second factor's projections

    @property
    def worst_resolvent(self) -> float:
        return max(self.eq_a_residual, self.eq_b_residual)


def factor_permutation(ball: MpBall, J1: Sequence[int], J2: Sequence[int]) -> np.ndarray:
    """perm[k] = row in the ball of the k-th configuration in (J1, J2) order."""
    order = list(J1) + list(J2)
    return np.arange(len(ball)).reshape(ball.shape).transpose(order).ravel()


def factor_hamiltonians(H: Hamiltonian, dec: Decomposition, V: PotentialSample,
                        U: Interaction) -> tuple[Hamiltonian, Hamiltonian]:
    ball = H.ball
    if ball is None:
        raise DomainError("tensor check needs a Hamiltonian on a polydisk")
    H1 = assemble(ball.sub_ball(dec.J_prime), H.Z, H.g, V, U)
    H2 = assemble(ball.sub_ball(dec.J_double), H.Z, H.g, V, U)
    return H1, H2


def interaction_split_error(H: Hamiltonian, dec: Decomposition, U: Interaction) -> float:
    C = H.configs
    full = U.energies(H.Z, C)
    parts = U.energies(H.Z, C[:, list(dec.J_prime)]) + U.energies(H.Z, C[:, list(dec.J_double)])
    return float(np.max(np.abs(full - parts)))


def pitrons_tensor_check(H: Hamiltonian, dec: Decomposition, E: float, V: PotentialSample,
                         U: Interaction | None = None) -> TensorReport:
    U = U or Interaction.none()
    split = interaction_split_error(H, dec, U)
    if split > 0:
        raise DomainError(f"decomposition is not interaction-free (defect {split:.3e})")
    check_resonance(H, E)
    H1, H2 = factor_hamiltonians(H, dec, V, U)
    perm = factor_permutation(H.ball, dec.J_prime, dec.J_double)
    Hp = H.dense()[np.ix_(perm, perm)]
    n1, n2 = H1.dim, H2.dim
    A1, A2 = H1.dense(), H2.dense()
    K = np.kron(A1, np.eye(n2)) + np.kron(np.eye(n1), A2)
    mat_res = float(np.max(np.abs(Hp - K)))
    lam, phi = H1.eigen
    mu, psi = H2.eigen
    sums = np.sort(np.add.outer(lam, mu).ravel())
    spec_res = float(np.max(np.abs(np.sort(H.spectrum) - sums)))
    G = np.linalg.inv(Hp - E * np.eye(H.dim))
    scale = float(np.max(np.abs(G)))
    Ga = np.zeros_like(G)
    for a in range(n1):
        Ga += np.kron(np.outer(phi[:, a], phi[:, a]), np.linalg.inv(A2 - (E - lam[a]) * np.eye(n2)))
    Gb = np.zeros_like(G)
    for b in range(n2):
        Gb += np.kron(np.linalg.inv(A1 - (E - mu[b]) * np.eye(n1)), np.outer(psi[:, b], psi[:, b]))
    return TensorReport(interaction_split=split, matrix_residual=mat_res,
                        spectrum_residual=spec_res,
                        eq_a_residual=float(np.max(np.abs(Ga - G)) / scale),
                        eq_b_residual=float(np.max(np.abs(Gb - G)) / scale))


def _in_interval(vals: np.ndarray, interval) -> np.ndarray:
    if interval is None:
        return np.ones(vals.size, dtype=bool)
    lo, hi = interval
    return (vals >= lo) & (vals <= hi)


def correlator_matrix(H: Hamiltonian, interval, rows, cols,
                      vectors: np.ndarray | None = None) -> np.ndarray:
    """sum over distinct eigenvalues in I of |P_lambda(x, y)| for x in rows, y in cols.

    For simple eigenvalues this is sum |psi(x) psi(y)|; degenerate clusters
    contribute the modulus of their projection kernel, which is what a
    function of H can see.
    """
    vals, vecs = H.eigen
    if vectors is not None:
        vecs = vectors
    rows = np.asarray([H._row(r) for r in rows], dtype=np.int64)
    cols = np.asarray([H._row(c) for c in cols], dtype=np.int64)
    keep = _in_interval(vals, interval)
    A, B = vecs[rows], vecs[cols]
    simple = np.zeros(vals.size, dtype=bool)
    out = np.zeros((rows.size, cols.size))
    for g in cluster_indices(vals):
        g = g[keep[g]]
        if g.size == 1:
            simple[g[0]] = True
        elif g.size > 1:
            out += np.abs(A[:, g] @ B[:, g].T)
    out += np.abs(A[:, simple]) @ np.abs(B[:, simple]).T
    return out


def ef_correlator(H: Hamiltonian, interval, x, y, vectors: np.ndarray | None = None) -> float:
    return float(correlator_matrix(H, interval, [x], [y], vectors)[0, 0])


def propagator_element(H: Hamiltonian, t: float, x, y, interval=None) -> float:
    vals, vecs = H.eigen
    keep = _in_interval(vals, interval)
    i, j = H._row(x), H._row(y)
    amp = np.sum(np.exp(-1j * t * vals[keep]) * vecs[i, keep] * vecs[j, keep])
    return float(abs(amp))


def dump_coo(H: Hamiltonian, stream=None) -> str:
    """Matrix as 'row col value' lines (nonzeros only, upper and lower triangle)."""
    M = sp.coo_matrix(H.matrix)
    order = np.lexsort((M.col, M.row))
    buf = io.StringIO() if stream is None else stream
    for k in order:
        if M.data[k] != 0.0:
            buf.write(f"{M.row[k]} {M.col[k]} {float(M.data[k])!r}\n")
    return buf.getvalue() if stream is None else ""


def load_coo(text: str, dim: int) -> np.ndarray:
    M = np.zeros((dim, dim))
    for line in text.splitlines():
        if line.strip():
            r, c, v = line.split()
            M[int(r), int(c)] = float(v)
    return M
