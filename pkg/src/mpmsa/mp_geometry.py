"""Multi-particle configuration geometry over a single-particle graph.

A configuration is a tuple of single-particle vertex indices, one per
particle. Distances between configurations use the max-metric ``rho`` and its
permutation-symmetrised version ``rho_sym``. Polydisks (``MpBall``) are
products of single-particle balls with a common radius.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, CapacityError
from .graph_core import Graph, DEFAULT_MAX_VERTICES

Config = tuple  # tuple[int, ...] of single-particle vertex indices

PI_THRESHOLD = 11


def as_config(Z: Graph, x: Sequence[int]) -> Config:
    cfg = tuple(int(v) for v in x)
    if not cfg:
        raise DomainError("a configuration needs at least one particle")
    for v in cfg:
        if not 0 <= v < Z.n:
            raise DomainError(f"vertex {v} is not in the single-particle graph")
    return cfg


def config_from_labels(Z: Graph, labels) -> Config:
    return tuple(Z.index(lab) for lab in labels)


def config_labels(Z: Graph, x: Config) -> tuple:
    return tuple(Z.label(v) for v in x)


_LITERAL = re.compile(r"^\s*\((.*)\)\s*$")


def parse_config_literal(text: str) -> tuple:
    """Parse ``"(0,3)"`` into ``(0, 3)``; for d > 1 use ``"((0,1),(2,3))"``."""
    m = _LITERAL.match(text)
    if not m:
        raise DomainError(f"not a configuration literal: {text!r}")
    body = m.group(1).strip()
    if not body:
        raise DomainError("empty configuration literal")
    if body.startswith("("):
        parts = re.findall(r"\(([^()]*)\)", body)
        return tuple(tuple(int(t) for t in p.split(",")) for p in parts)
    return tuple(int(t) for t in body.split(","))


def format_config_literal(labels: tuple) -> str:
    if labels and isinstance(labels[0], tuple):
        return "(" + ",".join("(" + ",".join(str(c) for c in p) + ")" for p in labels) + ")"
    return "(" + ",".join(str(c) for c in labels) + ")"


def support(x: Config) -> np.ndarray:
    return np.unique(np.asarray(x, dtype=np.int64))


def mp_neighbors(Z: Graph, x: Config) -> list[Config]:
    out = []
    for j, v in enumerate(x):
        for u in Z.adj[v]:
            y = list(x)
            y[j] = int(u)
            out.append(tuple(y))
    return out


def configuration_graph(Z: Graph, N: int, max_vertices: int = DEFAULT_MAX_VERTICES) -> Graph:
    """Explicit N-particle product graph; vertex index is mixed radix over Z.n."""
    n = Z.n ** N
    if n > max_vertices:
        raise CapacityError(f"configuration graph has {n} vertices", size=n, cap=max_vertices)
    configs = list(itertools.product(range(Z.n), repeat=N))
    weights = Z.n ** np.arange(N - 1, -1, -1)
    adjacency = []
    for c in configs:
        adjacency.append([int(np.dot(y, weights)) for y in mp_neighbors(Z, c)])
    G = Graph(adjacency, labels=configs, dim=None if Z.dim is None else Z.dim * N,
              growth_const=None, check_connected=False)
    return G


def _check_same_n(x: Config, y: Config):
    if len(x) != len(y):
        raise DomainError("configurations have different particle numbers")


def rho(Z: Graph, x: Config, y: Config) -> int:
    _check_same_n(x, y)
    return max(Z.distance(a, b) for a, b in zip(x, y))


def rho_sym(Z: Graph, x: Config, y: Config) -> int:
    """min over permutations of rho, via a bottleneck assignment."""
    _check_same_n(x, y)
    N = len(x)
    D = np.array([[Z.distance(a, b) for b in y] for a in x])
    if N <= 6:
        return int(min(D[np.arange(N), list(p)].max()
                       for p in itertools.permutations(range(N))))
    # bottleneck matching: smallest threshold admitting a perfect matching
    from scipy.optimize import linear_sum_assignment
    for t in np.unique(D):
        cost = (D > t).astype(float)
        r, c = linear_sum_assignment(cost)
        if cost[r, c].sum() == 0:
            return int(t)
    raise ConsistencyError("no perfect matching found")


def rho_matrix(Z: Graph, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """rho between every row of A and every row of B (arrays of configs)."""
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    out = np.zeros((A.shape[0], B.shape[0]), dtype=np.int64)
    for j in range(A.shape[1]):
        ua, ia = np.unique(A[:, j], return_inverse=True)
        ub, ib = np.unique(B[:, j], return_inverse=True)
        sub = np.array([Z.distances_from(a)[ub] for a in ua])
        np.maximum(out, sub[np.ix_(ia, ib)], out=out)
    return out


def rho_sym_matrix(Z: Graph, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    N = A.shape[1]
    best = None
    for p in itertools.permutations(range(N)):
        r = rho_matrix(Z, A, B[:, list(p)])
        best = r if best is None else np.minimum(best, r)
    return best


class MpBall:
    """The polydisk ``x ball(center_j, L)`` in the N-particle configuration graph.

    Vertices are enumerated in mixed-radix order over the factor balls; the
    full array of configurations is only built when asked for.
    """

    def __init__(self, Z: Graph, center: Sequence[int], L: int):
        if L < 0:
            raise DomainError("radius must be nonnegative")
        self.Z = Z
        self.center = as_config(Z, center)
        self.L = int(L)
        self.factors = tuple(Z.ball(c, self.L) for c in self.center)
        self.shape = tuple(f.size for f in self.factors)
        self.N = len(self.center)

    def __repr__(self):
        return f"MpBall(center={config_labels(self.Z, self.center)}, L={self.L})"

    def __len__(self):
        return int(np.prod(self.shape))

    @property
    def size(self) -> int:
        return len(self)

    @cached_property
    def support(self) -> np.ndarray:
        return np.unique(np.concatenate(self.factors))

    def projected_support(self, J) -> np.ndarray:
        J = list(J)
        if not J:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([self.factors[j] for j in J]))

    def config_at(self, i: int) -> Config:
        idx = np.unravel_index(i, self.shape)
        return tuple(int(f[k]) for f, k in zip(self.factors, idx))

    def __iter__(self) -> Iterator[Config]:
        for i in range(len(self)):
            yield self.config_at(i)

    def __contains__(self, x) -> bool:
        return len(x) == self.N and all(
            self.Z.distance(c, v) <= self.L for c, v in zip(self.center, x))

    def index_of(self, x: Config) -> int:
        idx = []
        for f, v in zip(self.factors, x):
            k = np.searchsorted(f, v)
            if k >= f.size or f[k] != v:
                raise DomainError(f"configuration {x} is not in {self!r}")
            idx.append(k)
        return int(np.ravel_multi_index(idx, self.shape))

    def configs(self) -> np.ndarray:
        grids = np.meshgrid(*self.factors, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    def inner_boundary_mask(self) -> np.ndarray:
        """Rows lying at rho = L from the centre (the inner boundary of the polydisk)."""
        dist = [self.Z.distances_from(c)[f] for c, f in zip(self.center, self.factors)]
        grids = np.meshgrid(*dist, indexing="ij")
        return (np.max(np.stack(grids), axis=0) == self.L).ravel()

    def edge_boundary_size(self) -> int:
        """|dB| in the ambient N-particle graph, from the factor boundaries."""
        total = 0
        for j, f in enumerate(self.factors):
            inside = np.zeros(self.Z.n, dtype=bool)
            inside[f] = True
            out_j = sum(int(np.count_nonzero(~inside[self.Z.adj[v]])) for v in f)
            total += out_j * int(np.prod([s for i, s in enumerate(self.shape) if i != j]))
        return total

    def disjoint_from(self, other: "MpBall") -> bool:
        if self.N != other.N:
            raise DomainError("balls have different particle numbers")
        return any(np.intersect1d(a, b).size == 0
                   for a, b in zip(self.factors, other.factors))

    def contains_ball(self, other: "MpBall") -> bool:
        return all(np.isin(b, a).all() for a, b in zip(self.factors, other.factors))

    def sub_ball(self, J) -> "MpBall":
        return MpBall(self.Z, tuple(self.center[j] for j in J), self.L)


def diameter(Z: Graph, S) -> int:
    return Z.diameter_of(S)


@dataclass(frozen=True)
class Decomposition:
    J_prime: tuple
    J_double: tuple
    cluster_gap: int


def _ball_union(Z: Graph, x: Config, L: int, J) -> np.ndarray:
    J = list(J)
    if not J:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([Z.ball(x[j], L) for j in J]))


def is_separable_from(Z: Graph, x: Config, y: Config, L: int) -> Decomposition | None:
    """Witness J' with the projected ball over J' disjoint from the support of B_L(y).

    J' ranges over nonempty index sets, the full set included (for N = 1
    that is the only choice). Smaller J' are tried first.
    """
    _check_same_n(x, y)
    N = len(x)
    target = _ball_union(Z, y, L, range(N))
    for size in range(1, N + 1):
        for J in itertools.combinations(range(N), size):
            part = _ball_union(Z, x, L, J)
            if np.intersect1d(part, target).size == 0:
                rest = tuple(j for j in range(N) if j not in J)
                return Decomposition(J_prime=J, J_double=rest,
                                     cluster_gap=Z.set_distance(part, target))
    return None


def is_separable_pair(Z: Graph, x: Config, y: Config, L: int) -> bool:
    return (is_separable_from(Z, x, y, L) is not None
            or is_separable_from(Z, y, x, L) is not None)


@dataclass(frozen=True)
class WeakSeparation:
    center: int          # centre of the single-particle ball Lambda
    radius: int
    J1: tuple
    J2: tuple
    forward: bool        # True: B(x) weakly separable from B(y)


def _weak_from(Z: Graph, x: Config, y: Config, L: int, centers, forward: bool):
    N = len(x)
    NL = N * L
    balls_x = [Z.ball(v, L) for v in x]
    balls_y = [Z.ball(v, L) for v in y]
    for c in centers:
        dist = Z.distances_from(c)
        for R in range(0, NL + 1):
            inside = dist <= R

            def classify(balls):
                J = []
                for j, b in enumerate(balls):
                    hit = inside[b]
                    if hit.all():
                        J.append(j)
                    elif hit.any():
                        return None
                return tuple(J)

            J1 = classify(balls_x)
            if not J1:
                continue
            J2 = classify(balls_y)
            if J2 is None or len(J1) <= len(J2):
                continue
            return WeakSeparation(center=int(c), radius=R, J1=J1, J2=J2, forward=forward)
    return None


def is_weakly_separable(Z: Graph, x: Config, y: Config, L: int) -> WeakSeparation | None:
    """Exhaustive witness search over single-particle balls of radius <= N L.

    Any admissible ball must contain some ball(x_j, L), so its centre lies
    within N L of the support of x (or of y for the reverse direction);
    all such centres are searched.
    """
    _check_same_n(x, y)
    N = len(x)
    for a, b, fwd in ((x, y, True), (y, x, False)):
        centers = _ball_union(Z, a, N * L, range(N))
        w = _weak_from(Z, a, b, L, centers, fwd)
        if w is not None:
            return w
    return None


@dataclass(frozen=True)
class Interactivity:
    partially_interactive: bool
    diameter: int
    decomposition: Decomposition | None = None

    @property
    def label(self) -> str:
        return "PI" if self.partially_interactive else "FI"


def cluster_components(Z: Graph, u: Config, L: int) -> list[tuple]:
    """Components of the overlap structure of the balls ball(u_j, 2L).

    Two such balls meet iff d(u_i, u_j) <= 4L (geodesic midpoints exist in any
    graph). Components are returned sorted by their smallest index.
    """
    N = len(u)
    parent = list(range(N))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(N):
        for j in range(i + 1, N):
            if Z.distance(u[i], u[j]) <= 4 * L:
                parent[find(i)] = find(j)
    comps = {}
    for i in range(N):
        comps.setdefault(find(i), []).append(i)
    return sorted((tuple(c) for c in comps.values()), key=lambda c: c[0])


def canonical_decomposition(Z: Graph, u: Config, L: int) -> Decomposition | None:
    comps = cluster_components(Z, u, L)
    if len(comps) < 2:
        return None
    J1 = comps[0]
    J2 = tuple(sorted(i for c in comps[1:] for i in c))
    gap = Z.set_distance(_ball_union(Z, u, L, J1), _ball_union(Z, u, L, J2))
    return Decomposition(J_prime=J1, J_double=J2, cluster_gap=gap)


def classify_interactive(Z: Graph, u: Config, L: int, r0: int,
                         threshold: float = PI_THRESHOLD,
                         require_scale: bool = True) -> Interactivity:
    N = len(u)
    diam = Z.diameter_of(support(u))
    if diam <= threshold * N * L:
        return Interactivity(False, diam)
    if require_scale and L < 8 * r0:
        raise DomainError(f"canonical decomposition needs L >= 8 r0 (L={L}, r0={r0})")
    dec = canonical_decomposition(Z, u, L)
    if dec is None or dec.cluster_gap <= r0:
        raise ConsistencyError(
            f"ball classified PI but no decomposition with gap > r0 (u={u}, L={L})")
    return Interactivity(True, diam, dec)
