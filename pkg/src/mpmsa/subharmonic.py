"""(l, q)-subharmonic functions on graphs and the decay bounds they imply."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResonanceError
from .graph_core import Graph

# float slack when comparing f(x) with q * max f; the inequalities are exact in
# real arithmetic and the computed values carry relative errors of order 1e-15
FLOAT_SLACK = 1e-12


@dataclass(frozen=True)
class SubharmonicCertificate:
    center: int
    L: int
    ell: int
    q: float
    verified: bool
    witness: int | None = None
    checked: int = 0


def _validate(G: Graph, center: int, L: int, ell: int):
    if not L >= ell >= 0:
        raise DomainError("need L >= ell >= 0")
    if G.ball(center, L).size == G.n:
        raise DomainError("the ball must be a proper subset of the graph")


def inner_centers(G: Graph, center: int, L: int, ell: int) -> np.ndarray:
    """Vertices x with ball(x, ell) contained in ball(center, L)."""
    inside = G.distances_from(center) <= L
    return np.array([x for x in np.flatnonzero(inside) if inside[G.ball(x, ell)].all()],
                    dtype=np.int64)


def check_lq_subharmonic(f: np.ndarray, G: Graph, center: int, L: int, ell: int,
                         q: float, slack: float = FLOAT_SLACK) -> SubharmonicCertificate:
    _validate(G, center, L, ell)
    f = np.abs(np.asarray(f, dtype=float))
    xs = inner_centers(G, center, L, ell)
    for x in xs:
        m = f[G.ball(x, ell + 1)].max()
        if f[x] > q * m * (1 + slack):
            return SubharmonicCertificate(center, L, ell, q, False, int(x), len(xs))
    return SubharmonicCertificate(center, L, ell, q, True, None, len(xs))


def radial_exponent(L: int, ell: int) -> int:
    return (L + 1) // (ell + 1)


@dataclass(frozen=True)
class RadialBound:
    global_bound: float   # q^k * max over the whole graph
    local_bound: float    # q^k * max over ball(center, L+1)
    exponent: int


def radial_bound(cert: SubharmonicCertificate, M: float, M_local: float | None = None) -> RadialBound:
    if not cert.verified:
        raise DomainError("radial bound needs a verified certificate")
    k = radial_exponent(cert.L, cert.ell)
    return RadialBound(global_bound=cert.q ** k * M,
                       local_bound=cert.q ** k * (M if M_local is None else M_local),
                       exponent=k)


def radial_bound_for(f: np.ndarray, G: Graph, cert: SubharmonicCertificate) -> RadialBound:
    f = np.abs(np.asarray(f, dtype=float))
    return radial_bound(cert, float(f.max()), float(f[G.ball(cert.center, cert.L + 1)].max()))


def two_point_bound(G: Graph, u1: int, r1: int, u2: int, r2: int, ell: int, q: float,
                    M: float) -> float:
    if min(r1, r2) < ell:
        raise DomainError("radii must be at least ell")
    if G.distance(u1, u2) < r1 + r2 + 2:
        raise DomainError("need d(u', u'') >= r' + r'' + 2")
    return q ** (radial_exponent(r1, ell) + radial_exponent(r2, ell)) * M


def check_separately_subharmonic(F: np.ndarray, G: Graph, u1: int, r1: int, u2: int, r2: int,
                                 ell: int, q: float) -> bool:
    """F[x, y] is (ell, q)-subharmonic in x on ball(u1, r1) for every y in
    ball(u2, r2 + 1) and in y on ball(u2, r2) for every x in ball(u1, r1 + 1)."""
    F = np.abs(np.asarray(F, dtype=float))
    for y in G.ball(u2, r2 + 1):
        if not check_lq_subharmonic(F[:, y], G, u1, r1, ell, q).verified:
            return False
    for x in G.ball(u1, r1 + 1):
        if not check_lq_subharmonic(F[x, :], G, u2, r2, ell, q).verified:
            return False
    return True


@dataclass(frozen=True)
class GreenSubharmonicFinding:
    hypothesis: bool            # every inner ell-ball is (E, m)-NS
    q: float | None
    verified: bool | None       # None when the hypothesis fails
    radial_ok: bool | None
    n_inner: int
    witness: int | None = None

    @property
    def counterexample(self) -> bool:
        return bool(self.hypothesis and not (self.verified and self.radial_ok))


def green_subharmonicity_certificate(G: Graph, potential: np.ndarray, center: int, L: int,
                                     ell: int, E: float, m: float, params, y: int | None = None
                                     ) -> GreenSubharmonicFinding:
    """Numerical check of the Green-function subharmonicity lemma (single particle).

    The Hamiltonian is the Dirichlet operator on the whole finite graph G. If
    every ball(x, ell) inside ball(center, L) is (E, m)-NS then
    x -> |G(x, y; E)| must be (ell, exp(-gamma(m, ell) ell))-subharmonic there
    for every y outside ball(center, L); that, and the radial bound it
    implies, are checked directly. ``y=None`` checks every admissible y.
    """
    from .hamiltonian import Hamiltonian, green_matrix
    from .mp_geometry import MpBall
    from .msa_engine import gamma, ns_check
    from .graph_core import schrodinger

    _validate(G, center, L, ell)
    M = schrodinger(G, np.arange(G.n), potential)
    H = Hamiltonian(G, np.arange(G.n)[:, None], M)
    dist = H.spectral_distance(E)
    if dist < 1e-8 * (1 + abs(E)):
        raise ResonanceError("energy resonant with the ambient operator", dist)
    xs = inner_centers(G, center, L, ell)
    for x in xs:
        ball = MpBall(G, (int(x),), ell)
        rows = ball.configs()[:, 0]
        Hb = Hamiltonian(G, ball.configs(), M[np.ix_(rows, rows)], ball=ball)
        if not ns_check(Hb, E, m, params).ns:
            return GreenSubharmonicFinding(False, None, None, None, len(xs), int(x))
    q = math.exp(-gamma(m, ell, params.tau) * ell)
    Gm = green_matrix(H, E, check=False)
    outside = np.flatnonzero(G.distances_from(center) > L)
    targets = outside if y is None else np.array([y])
    for t in targets:
        f = Gm[:, t]
        cert = check_lq_subharmonic(f, G, center, L, ell, q)
        if not cert.verified:
            return GreenSubharmonicFinding(True, q, False, None, len(xs), cert.witness)
        rb = radial_bound_for(f, G, cert)
        if abs(f[center]) > rb.local_bound * (1 + FLOAT_SLACK) or \
                abs(f[center]) > rb.global_bound * (1 + FLOAT_SLACK):
            return GreenSubharmonicFinding(True, q, True, False, len(xs), int(t))
    return GreenSubharmonicFinding(True, q, True, True, len(xs))
