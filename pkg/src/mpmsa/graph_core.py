"""Finite graphs, metric balls, boundaries, Laplacians and the geometric
resolvent identity.

Vertices are the integers ``0..n-1``. Every graph also carries a list of
labels (for lattice segments these are coordinate tuples, or plain integers
when ``d == 1``) so that user-facing code can speak in coordinates.

Sign convention for the coupling operator: ``coupling_operator`` returns the
matrix with entries ``+1`` at both orientations of every boundary edge, so
that for any potential

    H_G = (H_Lam (+) H_Lamc) - Gamma

holds entrywise. The kinetic part of ``H_G`` carries ``-1`` on those edges and
the block-diagonal part carries ``0``, hence the ``+1``.
"""
from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import CapacityError, DomainError, ResonanceError

DEFAULT_MAX_VERTICES = 200_000
# Above this size distances are computed by BFS on demand and cached per source.
DISTANCE_TABLE_MAX = 4096
GRI_RESONANCE_TOL = 1e-6


class LaplacianKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class Graph:
    """Immutable finite connected graph with integer hop distances."""

    def __init__(self, adjacency: Sequence[Iterable[int]], labels=None,
                 dim: int | None = None, growth_const: float | None = None,
                 check_connected: bool = True):
        n = len(adjacency)
        if n == 0:
            raise DomainError("empty graph")
        adj = []
        for v, nbrs in enumerate(adjacency):
            arr = np.array(sorted(set(int(u) for u in nbrs)), dtype=np.int64)
            if arr.size and (arr[0] < 0 or arr[-1] >= n):
                raise DomainError(f"vertex {v} has an out-of-range neighbour")
            if np.any(arr == v):
                raise DomainError(f"self-loop at vertex {v}")
            adj.append(arr)
        for v, arr in enumerate(adj):
            for u in arr:
                if v not in adj[u]:
                    raise DomainError(f"asymmetric edge {v}->{u}")
        self.n = n
        self.adj = tuple(adj)
        self.degree = np.array([a.size for a in adj], dtype=np.int64)
        self.labels = list(labels) if labels is not None else list(range(n))
        if len(self.labels) != n:
            raise DomainError("label count does not match vertex count")
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        self.dim = dim
        self.growth_const = growth_const
        self._sparse = None
        self._table = None
        self._bfs_cache: dict[int, np.ndarray] = {}
        if check_connected and n > 1:
            ncomp, _ = connected_components(self.sparse_adjacency(), directed=False)
            if ncomp != 1:
                raise DomainError("graph is not connected")

    def __repr__(self):
        return f"Graph(n={self.n}, dim={self.dim})"

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise DomainError(f"unknown vertex label {label!r}") from None

    def label(self, v: int):
        return self.labels[v]

    def edges(self):
        for v, arr in enumerate(self.adj):
            for u in arr:
                if v < u:
                    yield (v, int(u))

    def sparse_adjacency(self) -> csr_matrix:
        if self._sparse is None:
            rows = np.repeat(np.arange(self.n), self.degree)
            cols = np.concatenate(self.adj) if self.n else np.zeros(0, dtype=np.int64)
            data = np.ones(rows.size, dtype=np.float64)
            self._sparse = csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        return self._sparse

    @property
    def has_table(self) -> bool:
        return self.n <= DISTANCE_TABLE_MAX

    def distance_table(self) -> np.ndarray:
        if not self.has_table:
            raise CapacityError("graph too large for an all-pairs table",
                                size=self.n, cap=DISTANCE_TABLE_MAX)
        if self._table is None:
            d = shortest_path(self.sparse_adjacency(), method="D", unweighted=True)
            self._table = d.astype(np.int32)
        return self._table

    def distances_from(self, x: int) -> np.ndarray:
        if self.has_table:
            return self.distance_table()[x]
        cached = self._bfs_cache.get(x)
        if cached is not None:
            return cached
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[x] = 0
        queue = deque([x])
        while queue:
            v = queue.popleft()
            for u in self.adj[v]:
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        self._bfs_cache[x] = dist
        return dist

    def distance(self, x: int, y: int) -> int:
        return int(self.distances_from(x)[y])

    def ball(self, x: int, L: int) -> np.ndarray:
        """Sorted vertex indices at hop distance at most ``L`` from ``x``."""
        if L < 0:
            raise DomainError("ball radius must be nonnegative")
        return np.flatnonzero(self.distances_from(x) <= L)

    def set_distance(self, A: Iterable[int], B: Iterable[int]) -> int:
        A = np.asarray(list(A), dtype=np.int64)
        B = np.asarray(list(B), dtype=np.int64)
        if A.size == 0 or B.size == 0:
            raise DomainError("distance to an empty set")
        return int(min(self.distances_from(a)[B].min() for a in A))

    def diameter_of(self, S: Iterable[int]) -> int:
        S = np.asarray(list(S), dtype=np.int64)
        return int(max(self.distances_from(s)[S].max() for s in S))


def build_lattice_segment(d: int, half_width: int,
                          max_vertices: int = DEFAULT_MAX_VERTICES) -> Graph:
    """The box {-w..w}^d of Z^d with nearest-neighbour edges."""
    if d < 1:
        raise DomainError("dimension must be at least 1")
    if half_width < 1:
        raise DomainError("half_width must be at least 1")
    side = 2 * half_width + 1
    n = side ** d
    if n > max_vertices:
        raise CapacityError(f"lattice segment has {n} vertices", size=n, cap=max_vertices)
    coords = list(itertools.product(range(-half_width, half_width + 1), repeat=d))
    index = {c: i for i, c in enumerate(coords)}
    adjacency = []
    for c in coords:
        nbrs = []
        for axis in range(d):
            for step in (-1, 1):
                c2 = list(c)
                c2[axis] += step
                j = index.get(tuple(c2))
                if j is not None:
                    nbrs.append(j)
        adjacency.append(nbrs)
    labels = [c[0] for c in coords] if d == 1 else coords
    # |B_L| <= (2L+1)^d <= (3L)^d for L >= 1
    return Graph(adjacency, labels=labels, dim=d, growth_const=3.0 ** d,
                 check_connected=False)


def check_ball_growth(G: Graph, L_max: int | None = None) -> list[tuple[int, int, int]]:
    """Return the (x, L, |ball|) triples that break |B_L(x)| <= C_d L^d."""
    if G.dim is None or G.growth_const is None:
        raise DomainError("graph has no declared growth data")
    bad = []
    for x in range(G.n):
        dist = G.distances_from(x)
        top = int(dist.max()) if L_max is None else L_max
        counts = np.bincount(dist, minlength=top + 1).cumsum()
        for L in range(1, top + 1):
            size = int(counts[min(L, counts.size - 1)])
            if size > G.growth_const * L ** G.dim:
                bad.append((x, L, size))
    return bad


@dataclass(frozen=True)
class BoundaryDecomposition:
    inner: np.ndarray
    outer: np.ndarray
    edge_pairs: np.ndarray  # shape (k, 2): (inside, outside)

    def __len__(self):
        return len(self.edge_pairs)


def _as_vertex_set(G: Graph, Lam) -> np.ndarray:
    arr = np.asarray(list(Lam) if not isinstance(Lam, np.ndarray) else Lam, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= G.n):
        raise DomainError("vertex set leaves the graph")
    if np.unique(arr).size != arr.size:
        raise DomainError("vertex set has repeated entries")
    return arr


def _membership(G: Graph, Lam: np.ndarray) -> np.ndarray:
    mask = np.zeros(G.n, dtype=bool)
    mask[Lam] = True
    return mask


def boundary(G: Graph, Lam) -> BoundaryDecomposition:
    Lam = _as_vertex_set(G, Lam)
    if Lam.size == 0 or Lam.size == G.n:
        raise DomainError("boundary needs a nonempty proper subset")
    inside = _membership(G, Lam)
    pairs = []
    for x in np.sort(Lam):
        for y in G.adj[x]:
            if not inside[y]:
                pairs.append((int(x), int(y)))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return BoundaryDecomposition(inner=np.unique(pairs[:, 0]), outer=np.unique(pairs[:, 1]),
                                 edge_pairs=pairs)


def edge_boundary_size(G: Graph, Lam) -> int:
    Lam = _as_vertex_set(G, Lam)
    inside = _membership(G, Lam)
    return int(sum(np.count_nonzero(~inside[G.adj[x]]) for x in Lam))


def laplacian(G: Graph, Lam, kind: LaplacianKind | str = LaplacianKind.DIRICHLET) -> np.ndarray:
    """Dense matrix of -Delta on ``Lam`` in the order the vertices are given."""
    kind = LaplacianKind(kind)
    Lam = _as_vertex_set(G, Lam)
    if Lam.size == 0:
        raise DomainError("empty vertex set")
    pos = np.full(G.n, -1, dtype=np.int64)
    pos[Lam] = np.arange(Lam.size)
    M = np.zeros((Lam.size, Lam.size))
    for i, x in enumerate(Lam):
        j = pos[G.adj[x]]
        j = j[j >= 0]
        M[i, j] = -1.0
        M[i, i] = G.degree[x] if kind is LaplacianKind.DIRICHLET else j.size
    return M


def schrodinger(G: Graph, Lam, potential: np.ndarray | None = None,
                kind: LaplacianKind | str = LaplacianKind.DIRICHLET) -> np.ndarray:
    """-Delta on ``Lam`` plus the diagonal ``potential`` (indexed by vertex)."""
    Lam = _as_vertex_set(G, Lam)
    M = laplacian(G, Lam, kind)
    if potential is not None:
        M[np.diag_indices_from(M)] += np.asarray(potential, dtype=float)[Lam]
    return M


def block_operator(G: Graph, Lam, potential: np.ndarray | None = None,
                   kind: LaplacianKind | str = LaplacianKind.DIRICHLET) -> np.ndarray:
    """H_Lam (+) H_Lamc assembled on all of G in vertex order."""
    Lam = _as_vertex_set(G, Lam)
    inside = _membership(G, Lam)
    out = np.flatnonzero(~inside)
    Lam_sorted = np.flatnonzero(inside)
    M = np.zeros((G.n, G.n))
    for part in (Lam_sorted, out):
        if part.size:
            M[np.ix_(part, part)] = schrodinger(G, part, potential, kind)
    return M


def coupling_operator(G: Graph, Lam) -> np.ndarray:
    """Gamma on all of G: +1 at (x, y) and (y, x) for every boundary edge."""
    bd = boundary(G, Lam)
    M = np.zeros((G.n, G.n))
    M[bd.edge_pairs[:, 0], bd.edge_pairs[:, 1]] = 1.0
    M[bd.edge_pairs[:, 1], bd.edge_pairs[:, 0]] = 1.0
    return M


@dataclass(frozen=True)
class GriReport:
    lhs: float
    rhs: float
    residual: float
    relative: float
    bound: float            # sum of absolute values of the terms
    inequality_holds: bool
    dist_full: float
    dist_inner: float


def verify_gri(G: Graph, potential: np.ndarray, Lam, E: float, x: int, y: int,
               kind: LaplacianKind | str = LaplacianKind.DIRICHLET,
               tol: float = GRI_RESONANCE_TOL) -> GriReport:
    """Check the geometric resolvent identity for x in Lam and y outside.

    The full operator is the Dirichlet operator on the whole finite graph.
    For a Dirichlet inner operator the identity is

        G(x,y) = sum_{(u,u') in dLam} G_Lam(x,u) G(u',y).

    A Neumann inner operator has a smaller diagonal at the inner boundary,
    so the exact identity picks up the extra term
    ``- sum_u (n_G(u) - n_Lam(u)) G_Lam(x,u) G(u,y)``, which is included.
    """
    kind = LaplacianKind(kind)
    Lam = np.sort(_as_vertex_set(G, Lam))
    inside = _membership(G, Lam)
    if not inside[x] or inside[y]:
        raise DomainError("need x inside Lam and y outside")
    potential = np.asarray(potential, dtype=float)
    H = schrodinger(G, np.arange(G.n), potential)
    H_in = schrodinger(G, Lam, potential, kind)
    ev_full = np.linalg.eigvalsh(H)
    ev_in = np.linalg.eigvalsh(H_in)
    d_full = float(np.min(np.abs(ev_full - E)))
    d_in = float(np.min(np.abs(ev_in - E)))
    if d_full < tol:
        raise ResonanceError("energy resonant with the full operator", d_full)
    if d_in < tol:
        raise ResonanceError("energy resonant with the inner operator", d_in)
    e_y = np.zeros(G.n)
    e_y[y] = 1.0
    col = np.linalg.solve(H - E * np.eye(G.n), e_y)          # G(., y)
    pos = np.searchsorted(Lam, x)
    e_x = np.zeros(Lam.size)
    e_x[pos] = 1.0
    row_in = np.linalg.solve(H_in - E * np.eye(Lam.size), e_x)  # G_Lam(x, .)
    bd = boundary(G, Lam)
    u_pos = np.searchsorted(Lam, bd.edge_pairs[:, 0])
    terms = row_in[u_pos] * col[bd.edge_pairs[:, 1]]
    if kind is LaplacianKind.NEUMANN:
        n_in = np.array([np.count_nonzero(inside[G.adj[u]]) for u in Lam])
        excess = G.degree[Lam] - n_in
        k = np.flatnonzero(excess)
        terms = np.concatenate([terms, -excess[k] * row_in[k] * col[Lam[k]]])
    rhs = float(terms.sum())
    lhs = float(col[x])
    bound = float(np.abs(terms).sum())
    residual = abs(lhs - rhs)
    scale = max(abs(lhs), bound, np.finfo(float).tiny)
    return GriReport(lhs=lhs, rhs=rhs, residual=residual, relative=residual / scale,
                     bound=bound, inequality_holds=abs(lhs) <= bound * (1 + 1e-12),
                     dist_full=d_full, dist_inner=d_in)


def to_adjacency_text(G: Graph) -> str:
    return "".join(" ".join(str(v) for v in [i, *G.adj[i].tolist()]) + "\n"
                   for i in range(G.n))


def from_adjacency_text(text: str) -> Graph:
    rows = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [int(t) for t in line.split()]
        if parts[0] in rows:
            raise DomainError(f"vertex {parts[0]} listed twice")
        rows[parts[0]] = parts[1:]
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise DomainError("vertex indices must be 0..n-1")
    return Graph([rows[i] for i in range(n)])
