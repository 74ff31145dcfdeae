"""Eigenfunction correlators, their decay, and the deterministic bound that
turns non-singular balls into small correlators."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .graph_core import Graph
from .hamiltonian import (Hamiltonian, Interaction, assemble, assemble_on, cluster_indices,
                          correlator_matrix)
from .mp_geometry import MpBall, as_config, rho, rho_sym, rho_sym_matrix, support
from .msa_engine import Finding, HarnessRun, MsaParams, ns_check
from .parallel import parallel_map
from .random_field import Marginal, Uniform, derive_seed, sample_potential

CORE_FRACTION = 1e-3
FIT_FLOOR = 3


# --- eigenvector tails -----------------------------------------------------------

def _lu_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Partial-pivoting LU solve, in band storage when the matrix is narrow."""
    n = M.shape[0]
    r, c = np.nonzero(M)
    bw = int(np.max(np.abs(r - c))) if r.size else 0
    if 4 * bw >= n:
        return np.linalg.solve(M, rhs)
    ab = np.zeros((2 * bw + 1, n))
    for k in range(-bw, bw + 1):
        diag = np.diagonal(M, k)
        if k >= 0:
            ab[bw - k, k:] = diag
        else:
            ab[bw - k, :n + k] = diag
    return solve_banded((bw, bw), ab, rhs)


def refined_eigenvectors(H: Hamiltonian, core_fraction: float = CORE_FRACTION,
                         vectors: np.ndarray | None = None) -> np.ndarray:
    """Eigenvectors whose small entries are accurate relative to their size.

    A dense eigensolver only gets entries right to about 1e-16 absolutely.
    For a simple eigenvalue lam, the entries of psi below core_fraction * max
    are recomputed from (H - lam) psi = 0 with the large entries held fixed:
    an LU solve of the tail system is accurate relative to each entry, much
    like a Green function. Degenerate clusters are left untouched.
    """
    vals, vecs = H.eigen
    vecs = vecs if vectors is None else vectors
    A = H.dense()
    n = H.dim
    out = vecs.copy()
    simple = [g[0] for g in cluster_indices(vals) if g.size == 1]
    for i in simple:
        psi = vecs[:, i]
        core = np.abs(psi) >= core_fraction * np.max(np.abs(psi))
        tail = ~core
        if not tail.any():
            continue
        M = A[np.ix_(tail, tail)] - vals[i] * np.eye(int(tail.sum()))
        rhs = -A[np.ix_(tail, core)] @ psi[core]
        try:
            t = _lu_solve(M, rhs)
        except (np.linalg.LinAlgError, ValueError):
            continue
        v = psi.copy()
        v[tail] = t
        out[:, i] = v / np.linalg.norm(v)
    return out


# --- fits --------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    model: str              # "exp" or "subexp"
    params: dict
    residual: float         # rms of log residuals
    distance: str
    n_points: int

    @property
    def decays(self) -> bool:
        if self.model == "exp":
            return self.params.get("m", 0.0) > 0
        return self.params.get("a", 0.0) > 0 and self.params.get("c", 0.0) > 0


def _fit_points(r, values, floor: int):
    r = np.asarray(r, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (r >= 2 * floor) & (v > 0) & np.isfinite(v)
    return r[keep], np.log(v[keep])


def fit_exponential(r, values, distance: str = "rho", floor: int = FIT_FLOOR) -> DecayFit:
    """ln v = ln C - m r by least squares, over distances >= 2 * floor."""
    x, y = _fit_points(r, values, floor)
    if x.size < 2:
        return DecayFit("exp", {"m": math.nan, "logC": math.nan}, math.nan, distance, int(x.size))
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (icpt + slope * x)
    return DecayFit("exp", {"m": float(-slope), "logC": float(icpt)},
                    float(np.sqrt(np.mean(res ** 2))), distance, int(x.size))


def fit_subexponential(r, values, distance: str = "rho", floor: int = FIT_FLOOR,
                       c_max: float = 5.0) -> DecayFit:
    """ln v = ln C - a ln(r)^(1+c); (ln C, a) linear for fixed c, c by 1-d search."""
    x, y = _fit_points(r, values, floor)
    if x.size < 3:
        return DecayFit("subexp", {"a": math.nan, "c": math.nan, "logC": math.nan},
                        math.nan, distance, int(x.size))
    lx = np.log(x)

    def solve(c):
        X = np.stack([np.ones_like(lx), -lx ** (1 + c)], axis=1)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        return coef, y - X @ coef

    opt = minimize_scalar(lambda c: float(np.sum(solve(c)[1] ** 2)),
                          bounds=(1e-6, c_max), method="bounded")
    coef, res = solve(opt.x)
    return DecayFit("subexp", {"a": float(coef[1]), "c": float(opt.x), "logC": float(coef[0])},
                    float(np.sqrt(np.mean(res ** 2))), distance, int(x.size))


# --- symmetry sectors -------------------------------------------------------------

def sector_embedding(configs: np.ndarray, sector: str) -> tuple[np.ndarray, np.ndarray]:
    """Orbit representatives and the isometry from a symmetry sector into the domain.

    ``sector`` is "symmetric" (bosons) or "antisymmetric" (fermions); the
    domain must be closed under permuting coordinates. Column k of the
    returned matrix is the normalised (anti)symmetrised indicator of the k-th
    orbit; orbits with a repeated site are dropped in the antisymmetric case.
    """
    if sector not in ("symmetric", "antisymmetric"):
        raise DomainError(f"unknown sector {sector!r}")
    configs = np.asarray(configs, dtype=np.int64)
    N = configs.shape[1]
    index = {tuple(c): i for i, c in enumerate(configs.tolist())}
    reps, cols = [], []
    seen = set()
    for c in configs.tolist():
        key = tuple(sorted(c))
        if key in seen:
            continue
        seen.add(key)
        if sector == "antisymmetric" and len(set(key)) < N:
            continue
        col = {}
        for perm in itertools.permutations(range(N)):
            img = tuple(key[p] for p in perm)
            if img not in index:
                raise DomainError("domain is not closed under permutations")
            sgn = 1.0 if sector == "symmetric" else _perm_sign(perm)
            col[index[img]] = sgn
        reps.append(key)
        cols.append(col)
    P = np.zeros((configs.shape[0], len(cols)))
    for k, col in enumerate(cols):
        for i, v in col.items():
            P[i, k] = v
        P[:, k] /= np.linalg.norm(P[:, k])
    return np.array(reps, dtype=np.int64), P


def _perm_sign(perm) -> float:
    perm = list(perm)
    sign = 1.0
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def sector_eigenpairs(H: Hamiltonian, sector: str | None, refine: bool = True):
    """Eigenvalues and eigenvectors (as functions on the whole domain) of H
    restricted to a symmetry sector; ``sector=None`` means the whole space."""
    if sector is None:
        vals = H.eigen[0]
        return vals, refined_eigenvectors(H) if refine else H.eigen[1]
    reps, P = sector_embedding(H.configs, sector)
    Hs = Hamiltonian(H.Z, reps, P.T @ H.dense() @ P, H.g)
    vals = Hs.eigen[0]
    vecs = refined_eigenvectors(Hs) if refine else Hs.eigen[1]
    return vals, P @ vecs


def sector_correlators(vals: np.ndarray, vecs: np.ndarray, interval, rows, cols) -> np.ndarray:
    """Correlator matrix from explicit eigenpairs (clusters handled as projections)."""
    keep = np.ones(vals.size, dtype=bool) if interval is None else \
        (vals >= interval[0]) & (vals <= interval[1])
    A, B = vecs[rows], vecs[cols]
    simple = np.zeros(vals.size, dtype=bool)
    out = np.zeros((len(rows), len(cols)))
    for g in cluster_indices(vals):
        g = g[keep[g]]
        if g.size == 1:
            simple[g[0]] = True
        elif g.size > 1:
            out += np.abs(A[:, g] @ B[:, g].T)
    out += np.abs(A[:, simple]) @ np.abs(B[:, simple]).T
    return out


# --- correlator tables ---------------------------------------------------------

@dataclass(frozen=True)
class CorrelatorRow:
    x: tuple
    y: tuple
    rho: int
    rho_sym: int
    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class CorrelatorTable:
    rows: tuple
    samples: np.ndarray = field(repr=False, default=None)   # (trials, pairs)

    def distances(self, kind: str = "rho") -> np.ndarray:
        return np.array([r.rho if kind == "rho" else r.rho_sym for r in self.rows])

    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.rows])

    def fit(self, model: str = "exp", kind: str = "rho", floor: int = FIT_FLOOR,
            exclude_orbit: bool = True) -> DecayFit:
        d = self.distances(kind)
        m = self.means()
        if exclude_orbit:
            keep = self.distances("rho_sym") > 0
            d, m = d[keep], m[keep]
        fn = fit_exponential if model == "exp" else fit_subexponential
        return fn(d, m, kind, floor)

    def monotone_decreasing(self, kind: str = "rho_sym", sigmas: float = 3.0) -> bool:
        """Means non-increasing in distance, up to `sigmas` combined standard errors."""
        d = self.distances(kind)
        order = np.argsort(d, kind="stable")
        rows = [self.rows[i] for i in order if d[i] > 0]
        for a, b in zip(rows[:-1], rows[1:]):
            if b.mean > a.mean + sigmas * math.hypot(a.stderr, b.stderr):
                return False
        return True


def strip_domain(Z: Graph, lo: int, hi: int, dmin: int, dmax: int) -> np.ndarray:
    """Two-particle configurations (a, b) on labels lo..hi with dmin <= b - a <= dmax (d = 1)."""
    out = [(Z.index(a), Z.index(b)) for a in range(lo, hi + 1) for b in range(lo, hi + 1)
           if dmin <= b - a <= dmax]
    return np.array(out, dtype=np.int64)


def correlator_decay_experiment(Z: Graph, configs: np.ndarray, g: float, pairs, I,
                                trials: int, seed: int, marginal: Marginal | None = None,
                                U: Interaction | None = None, refine: bool = True,
                                sector: str | None = None, threads: int = 1) -> CorrelatorTable:
    """Mean over disorder of sum over eigenvalues in I of |P(x, y)| for each pair.

    With ``sector`` the Hamiltonian is first restricted to symmetric or
    antisymmetric functions (indistinguishable particles).
    """
    marginal = marginal or Uniform()
    configs = np.asarray(configs, dtype=np.int64)
    pairs = [(as_config(Z, x), as_config(Z, y)) for x, y in pairs]
    sup = np.unique(configs)
    xs = sorted({x for x, _ in pairs})
    ys = sorted({y for _, y in pairs})
    xi = np.array([xs.index(x) for x, _ in pairs])
    yi = np.array([ys.index(y) for _, y in pairs])
    index = {tuple(c): i for i, c in enumerate(configs.tolist())}
    try:
        rows = [index[x] for x in xs]
        cols = [index[y] for y in ys]
    except KeyError as exc:
        raise DomainError(f"pair configuration {exc} outside the domain") from None

    def run(i):
        V = sample_potential(marginal, sup, derive_seed(seed, "correlator", i))
        H = assemble_on(Z, configs, g, V, U)
        vals, vecs = sector_eigenpairs(H, sector, refine)
        C = sector_correlators(vals, vecs, I, rows, cols)
        return np.minimum(1.0, C[xi, yi])

    S = np.array(parallel_map(run, range(trials), threads))
    rows = []
    for k, (x, y) in enumerate(pairs):
        col = S[:, k]
        se = float(col.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
        rows.append(CorrelatorRow(x, y, rho(Z, x, y), rho_sym(Z, x, y), float(col.mean()),
                                  se, trials))
    return CorrelatorTable(tuple(rows), S)


def fit_by_stratum(Z: Graph, table: CorrelatorTable, model: str = "exp",
                   kind: str = "rho_sym", floor: int = FIT_FLOOR) -> dict:
    """Separate fits per diameter of the starting configuration's support."""
    groups = {}
    for r in table.rows:
        groups.setdefault(Z.diameter_of(support(r.x)), []).append(r)
    return {diam: CorrelatorTable(tuple(rows)).fit(model, kind, floor)
            for diam, rows in sorted(groups.items())}


# --- deterministic Bessel bound ---------------------------------------------------

def bessel_bound_check(H: Hamiltonian, x: Sequence[int], y: Sequence[int], L: int, m: float,
                       I, params: MsaParams) -> Finding:
    """If every eigenvalue in I has an NS ball of radius L at x or at y, the
    correlator between x and y is at most 4 exp(-m L)."""
    Z = H.Z
    x, y = as_config(Z, x), as_config(Z, y)
    if rho(Z, x, y) <= 2 * L + 1:
        raise DomainError("need rho(x, y) > 2L + 1")
    bx, by = MpBall(Z, x, L), MpBall(Z, y, L)
    rows_x = np.array([H.index_of(c) for c in bx.configs()])
    rows_y = np.array([H.index_of(c) for c in by.configs()])
    if rows_x.size == H.dim or rows_y.size == H.dim:
        raise DomainError("the domain must be larger than each ball")

    def ball_ham(ball, rows):
        return Hamiltonian(Z, ball.configs(), H.restricted(rows), H.g, ball)

    Hx, Hy = ball_ham(bx, rows_x), ball_ham(by, rows_y)
    vals = H.spectrum
    lo, hi = I
    inside = vals[(vals >= lo) & (vals <= hi)]
    for lam in inside:
        if not (ns_check(Hx, lam, m, params).ns or ns_check(Hy, lam, m, params).ns):
            return Finding(False, None, {"eigenvalues": int(inside.size)})
    corr = float(correlator_matrix(H, I, [x], [y])[0, 0])
    bound = 4 * math.exp(-m * L)
    return Finding(True, corr <= bound, {"correlator": corr, "bound": bound,
                                         "eigenvalues": int(inside.size)})


def bessel_run(N: int, L: int, g: float, trials: int, seed: int, params: MsaParams,
               marginal: Marginal | None = None, U: Interaction | None = None,
               threads: int = 1) -> HarnessRun:
    """Bessel-bound harness on a one-dimensional ball of radius 2L + 2 holding
    x and y at distance 2L + 2, with I covering the whole spectrum."""
    from .msa_engine import _line
    marginal = marginal or Uniform()
    U = U or Interaction.none()
    Z = _line(2 * L + 3)
    o = Z.index(0)
    x = tuple(Z.index(-L - 1 + j) for j in range(N))
    y = tuple(Z.index(L + 1 + j) for j in range(N))
    ball = MpBall(Z, tuple([o] * N), 2 * L + 2)
    I = (-1.0, g * N + 4.0 * N + 1.0)

    def run(i):
        V = sample_potential(marginal, ball.support, derive_seed(seed, "bessel", i))
        H = assemble(ball, Z, g, V, U)
        return bessel_bound_check(H, x, y, L, params.m, I, params)

    return HarnessRun("bessel", L, tuple(parallel_map(run, range(trials), threads)))


# --- eigenfunction decay ---------------------------------------------------------

@dataclass(frozen=True)
class EigenDecay:
    index: int
    energy: float
    center: tuple
    distances: np.ndarray
    profile: np.ndarray     # max |psi| over each sphere around the centre
    fit: DecayFit


def localization_center(H: Hamiltonian, psi: np.ndarray) -> tuple:
    a = np.abs(psi)
    best = np.flatnonzero(a == a.max())
    # lexicographic tie-break on the configuration
    cands = sorted(tuple(int(v) for v in H.configs[i]) for i in best)
    return cands[0]


def eigenfunction_decay(H: Hamiltonian, I=None, kind: str = "rho_sym", floor: int = FIT_FLOOR,
                        vectors: np.ndarray | None = None,
                        values: np.ndarray | None = None) -> list[EigenDecay]:
    """Decay profile of each eigenvector around its localization centre.

    ``vectors``/``values`` replace the eigenpairs of H, e.g. the output of
    sector_eigenpairs (fewer columns than H.dim).
    """
    vals, vecs = H.eigen
    vecs = vecs if vectors is None else vectors
    vals = vals if values is None else values
    if vecs.shape[1] != vals.size:
        raise DomainError("vectors and values disagree in number")
    out = []
    for i in range(vals.size):
        if I is not None and not (I[0] <= vals[i] <= I[1]):
            continue
        psi = vecs[:, i]
        c = localization_center(H, psi)
        if kind == "rho_sym":
            dist = rho_sym_matrix(H.Z, np.array([c]), H.configs)[0]
        else:
            from .mp_geometry import rho_matrix
            dist = rho_matrix(H.Z, np.array([c]), H.configs)[0]
        ds = np.unique(dist)
        prof = np.array([np.abs(psi[dist == d]).max() for d in ds])
        out.append(EigenDecay(i, float(vals[i]), c, ds, prof,
                              fit_exponential(ds, prof, kind, floor)))
    return out


# --- stabilization ---------------------------------------------------------------

def bump(lo: float, hi: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth function supported in [lo, hi], equal to 1 at the midpoint."""
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def phi(E):
        t = (np.asarray(E, dtype=float) - mid) / half
        out = np.zeros(t.shape)
        inside = np.abs(t) < 1
        out[inside] = np.exp(1 - 1 / (1 - t[inside] ** 2))
        return out
    return phi


def default_test_functions(I, pieces: int = 4) -> list[Callable]:
    lo, hi = I
    edges = np.linspace(lo, hi, pieces + 1)
    fams = []
    for a, b in zip(edges[:-1], edges[1:]):
        base = bump(a, b)
        fams.append(base)
        fams.append(lambda E, base=base, a=a, b=b: base(E) * (np.asarray(E) - a) / (b - a))
    return fams


def spectral_measure(H: Hamiltonian, x, y, phi: Callable) -> float:
    vals, vecs = H.eigen
    i, j = H._row(x), H._row(y)
    return float(np.sum(phi(vals) * vecs[i] * vecs[j]))


def stabilization_check(Z: Graph, center: Sequence[int], L_small: int, L_big: int, g: float,
                        V, x, y, phis: Sequence[Callable],
                        U: Interaction | None = None) -> np.ndarray:
    """|mu_small(phi) - mu_big(phi)| for each phi, with x, y deep in the smaller ball."""
    center = as_config(Z, center)
    x, y = as_config(Z, x), as_config(Z, y)
    if L_big < L_small:
        raise DomainError("need L_big >= L_small")
    for z in (x, y):
        if rho(Z, z, center) > L_small // 2:
            raise DomainError("x and y must lie within L_small / 2 of the centre")
    Hs = assemble(MpBall(Z, center, L_small), Z, g, V, U)
    Hb = assemble(MpBall(Z, center, L_big), Z, g, V, U)
    return np.array([abs(spectral_measure(Hs, x, y, p) - spectral_measure(Hb, x, y, p))
                     for p in phis])
