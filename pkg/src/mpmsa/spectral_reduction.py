"""From fixed to variable energy: singular-energy sets of a ball, their
covers by intervals read off the rational Green functions, and the
two-volume variable-energy events built from those covers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConsistencyError, DomainError
from .graph_core import Graph
from .hamiltonian import (Hamiltonian, Interaction, assemble, cluster_indices)
from .mp_geometry import MpBall, as_config, is_separable_from, is_weakly_separable
from .msa_engine import BinomialCount, Estimate, spectral_gap_between
from .parallel import parallel_map
from .random_field import Marginal, Uniform, derive_seed, sample_potential

SAMPLES_PER_GAP = 64
ROOT_XTOL = 1e-13
KAPPA_DROP = 1e-13


@dataclass(frozen=True)
class RationalFunction:
    """f(E) = sum kappa_j / (pole_j - E) with the vanishing terms removed."""
    poles: np.ndarray
    kappas: np.ndarray

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sum(self.kappas / (self.poles - E[..., None]), axis=-1)

    def derivative(self, E):
        E = np.asarray(E, dtype=float)
        return np.sum(self.kappas / (self.poles - E[..., None]) ** 2, axis=-1)

    @property
    def is_zero(self) -> bool:
        return self.poles.size == 0


class EnergyProfile:
    """F(E) = max over inner-boundary rows y of |G(centre, y; E)| for one ball."""

    def __init__(self, H: Hamiltonian, ball: MpBall | None = None, drop: float = KAPPA_DROP):
        ball = ball or H.ball
        if ball is None:
            raise DomainError("energy profile needs a polydisk Hamiltonian")
        self.H = H
        self.ball = ball
        self.center_row = ball.index_of(ball.center)
        targets = np.flatnonzero(ball.inner_boundary_mask())
        if targets.size == 0:
            # L = 0: the single configuration is its own boundary
            targets = np.array([self.center_row])
        self.targets = targets
        vals, vecs = H.eigen
        self.poles_all = vals
        groups = cluster_indices(vals)
        poles = np.array([vals[g].mean() for g in groups])
        prod = vecs[self.center_row][None, :] * vecs[targets]
        kap = np.stack([prod[:, g].sum(axis=1) for g in groups], axis=1)
        self.functions = []
        for row in kap:
            keep = np.abs(row) > drop
            self.functions.append(RationalFunction(poles[keep], row[keep]))

    @property
    def K(self) -> int:
        return self.H.dim

    def __call__(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        out = np.zeros(E.shape)
        for f in self.functions:
            if not f.is_zero:
                np.maximum(out, np.abs(f(E)), out=out)
        return out

    def direct(self, E: float) -> float:
        """F(E) from a linear solve, independent of the eigen-decomposition."""
        e = np.zeros(self.H.dim)
        e[self.center_row] = 1.0
        col = np.linalg.solve(self.H.dense() - E * np.eye(self.H.dim), e)
        return float(np.max(np.abs(col[self.targets])))


@dataclass(frozen=True)
class IntervalCover:
    intervals: np.ndarray      # (k, 2), sorted and pairwise disjoint
    I: tuple
    K: int
    raw_count: int = 0         # monotone-segment pieces before merging

    @property
    def count(self) -> int:
        return int(self.intervals.shape[0])

    @property
    def total_length(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0])) if self.count else 0.0

    @property
    def full(self) -> bool:
        return self.count == 1 and self.intervals[0, 0] <= self.I[0] and \
            self.intervals[0, 1] >= self.I[1]

    @property
    def empty(self) -> bool:
        return self.count == 0

    def contains(self, E) -> np.ndarray:
        E = np.atleast_1d(np.asarray(E, dtype=float))
        if not self.count:
            return np.zeros(E.shape, dtype=bool)
        k = np.searchsorted(self.intervals[:, 0], E, side="right") - 1
        kc = np.clip(k, 0, self.count - 1)
        return (k >= 0) & (E <= self.intervals[kc, 1])

    def translated(self, t: float) -> "IntervalCover":
        return IntervalCover(self.intervals + t, (self.I[0] + t, self.I[1] + t), self.K,
                             self.raw_count)

    def intersects(self, other: "IntervalCover", slack: float = 0.0) -> bool:
        """Some point of self lies within ``slack`` of some point of other."""
        return min_gap(self.intervals, other.intervals) <= slack


def min_gap(A: np.ndarray, B: np.ndarray) -> float:
    """Distance between two unions of closed intervals (0 when they meet)."""
    if A.shape[0] == 0 or B.shape[0] == 0:
        return math.inf
    best = math.inf
    i = j = 0
    while i < A.shape[0] and j < B.shape[0]:
        lo = max(A[i, 0], B[j, 0])
        hi = min(A[i, 1], B[j, 1])
        best = min(best, max(0.0, lo - hi))
        if A[i, 1] < B[j, 1]:
            i += 1
        else:
            j += 1
    return best


def merge_intervals(pieces: list[tuple[float, float]]) -> np.ndarray:
    if not pieces:
        return np.zeros((0, 2))
    arr = np.array(sorted(pieces))
    out = [list(arr[0])]
    for lo, hi in arr[1:]:
        if lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return np.array(out)


def _approach_pole(f: RationalFunction, pole: float, inner: float, target: float) -> float:
    """A point between inner and pole where |f| exceeds target, moving towards the pole."""
    h = abs(inner - pole)
    direction = 1.0 if inner > pole else -1.0
    for _ in range(400):
        h *= 0.5
        E = pole + direction * h
        if E == pole:
            break
        if abs(float(f(E))) > target:
            return E
    return pole + direction * h


def _critical_points(f: RationalFunction, lo: float, hi: float, samples: int) -> list[float]:
    if hi <= lo:
        return []
    t = lo + (hi - lo) * (np.arange(1, samples + 1) / (samples + 1))
    d = f.derivative(t)
    out = []
    for k in range(samples - 1):
        if d[k] == 0.0:
            out.append(float(t[k]))
        elif d[k] * d[k + 1] < 0:
            out.append(brentq(lambda e: float(f.derivative(e)), t[k], t[k + 1],
                              xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    return out


def _superlevel_on_monotone(f: RationalFunction, p: float, q: float, a: float,
                            sign: float) -> tuple[float, float] | None:
    """{E in [p, q]: sign * f(E) >= a} for f monotone on [p, q] (finite endpoints)."""
    fp, fq = sign * float(f(p)), sign * float(f(q))
    if fp >= a and fq >= a:
        return p, q
    if fp < a and fq < a:
        return None
    r = brentq(lambda e: sign * float(f(e)) - a, p, q, xtol=ROOT_XTOL,
               rtol=4 * np.finfo(float).eps)
    return (r, q) if fq >= a else (p, r)


def function_cover(f: RationalFunction, a: float, I: tuple,
                   samples: int = SAMPLES_PER_GAP) -> list[tuple[float, float]]:
    """Closed intervals covering {E in I: |f(E)| >= a}, one or two per monotone segment."""
    lo, hi = I
    if f.is_zero:
        return []
    poles = np.unique(f.poles)
    inside = poles[(poles > lo) & (poles < hi)]
    edges = [(lo, None)] + [(p, p) for p in inside] + [(hi, None)]
    # a pole sitting exactly on an end of I
    edges[0] = (lo, lo if np.any(poles == lo) else None)
    edges[-1] = (hi, hi if np.any(poles == hi) else None)
    pieces = []
    for (left, lpole), (right, rpole) in zip(edges[:-1], edges[1:]):
        if right <= left:
            continue
        crit = _critical_points(f, left, right, samples)
        bounds = [left] + crit + [right]
        for s, e in zip(bounds[:-1], bounds[1:]):
            if e <= s:
                continue
            mid = 0.5 * (s + e)
            s_eval = _approach_pole(f, lpole, mid, 4 * a) if (s == left and lpole is not None) else s
            e_eval = _approach_pole(f, rpole, mid, 4 * a) if (e == right and rpole is not None) else e
            for sign in (1.0, -1.0):
                piece = _superlevel_on_monotone(f, s_eval, e_eval, a, sign)
                if piece is None:
                    continue
                p0, p1 = piece
                # close pole-adjacent pieces at the pole itself
                if p0 == s_eval and s_eval != s:
                    p0 = s
                if p1 == e_eval and e_eval != e:
                    p1 = e
                pieces.append((p0, p1))
    return pieces


def singular_energy_set(profile: EnergyProfile, a: float, I: tuple,
                        samples: int = SAMPLES_PER_GAP) -> IntervalCover:
    """Cover of {E in I: F(E) >= a}; the piece count is held below 3 K^2."""
    if a <= 0:
        raise DomainError("threshold a must be positive")
    lo, hi = float(I[0]), float(I[1])
    if not hi > lo:
        raise DomainError("energy interval must have positive length")
    if hi - lo > 1.0 + 1e-12:
        raise DomainError(f"energy interval longer than 1: {(lo, hi)}")
    pieces = []
    for f in profile.functions:
        pieces.extend(function_cover(f, a, (lo, hi), samples))
    K = profile.K
    if len(pieces) >= 3 * K * K:
        raise ConsistencyError(f"{len(pieces)} monotone pieces, at least 3K^2 = {3 * K * K}")
    return IntervalCover(merge_intervals(pieces), (lo, hi), K, len(pieces))


def cover_for(H: Hamiltonian, a: float, I: tuple) -> IntervalCover:
    return singular_energy_set(EnergyProfile(H), a, I)


def shift_covariance_check(H: Hamiltonian, t_grid: Sequence[float], a: float,
                           I: tuple) -> float:
    """Largest endpoint drift between cover(H + t, I + t) - t and cover(H, I)."""
    base = cover_for(H, a, I)
    worst = 0.0
    for t in t_grid:
        moved = cover_for(H.shifted(t), a, (I[0] + t, I[1] + t))
        if moved.count != base.count:
            return math.inf
        if base.count:
            worst = max(worst, float(np.max(np.abs(moved.intervals - t - base.intervals))))
    return worst


def far_set(spectrum: np.ndarray, c: float, I: tuple) -> np.ndarray:
    """Closed pieces of I at distance >= c from every eigenvalue."""
    out, cur = [], I[0]
    for lo, hi in merge_intervals([(lam - c, lam + c) for lam in spectrum]):
        if hi < I[0]:
            continue
        if lo > I[1]:
            break
        if lo > cur:
            out.append((cur, lo))
        cur = max(cur, hi)
    if cur <= I[1]:
        out.append((cur, I[1]))
    return np.array(out).reshape(-1, 2)


# --- single-ball events ------------------------------------------------------

@dataclass(frozen=True)
class EventBEstimate:
    event: Estimate              # P{mes(E_x(a)) > b}
    mean_measure: float          # empirical E[mes(E_x(a))]
    fixed_energy: Estimate       # sup over the E-grid of P{F(E) >= a}
    fubini: float                # |I| times the grid average of P{F(E) >= a}
    b: float

    @property
    def chebyshev_bound(self) -> float:
        return self.fubini / self.b

    @property
    def holds(self) -> bool:
        return self.event.value <= self.chebyshev_bound + 3 * self.event.stderr


def measure_event_B(Z: Graph, center: Sequence[int], L: int, g: float, a: float, b: float,
                    I: tuple, trials: int, seed: int, marginal: Marginal | None = None,
                    U: Interaction | None = None, E_grid: int = 33,
                    threads: int = 1) -> EventBEstimate:
    if b <= 0:
        raise DomainError("b must be positive")
    marginal = marginal or Uniform()
    ball = MpBall(Z, center, L)
    grid = np.linspace(I[0], I[1], E_grid)

    def run(i):
        V = sample_potential(marginal, ball.support, derive_seed(seed, "eventB", i))
        H = assemble(ball, Z, g, V, U)
        if a == 0:
            return I[1] - I[0], np.ones(grid.size, dtype=bool)
        cover = singular_energy_set(EnergyProfile(H), a, I)
        return cover.total_length, cover.contains(grid)

    res = parallel_map(run, range(trials), threads)
    mes = np.array([r[0] for r in res])
    hits = np.array([r[1] for r in res])
    ev = BinomialCount(int(np.count_nonzero(mes > b)), trials)
    per_E = hits.mean(axis=0)
    k = int(np.argmax(per_E))
    fixed = BinomialCount(int(hits[:, k].sum()), trials)
    return EventBEstimate(event=Estimate(ev.p, ev.stderr, trials),
                          mean_measure=float(mes.mean()),
                          fixed_energy=Estimate(fixed.p, fixed.stderr, trials),
                          fubini=float((I[1] - I[0]) * per_E.mean()), b=b)


@dataclass(frozen=True)
class CoverTrial:
    count: int
    total_length: float
    K: int
    event_B: bool          # measure above b
    shift_drift: float     # worst endpoint drift under the shift test, nan if skipped


def cover_trials(Z: Graph, center: Sequence[int], L: int, g: float, a: float, b: float,
                 I: tuple, trials: int, seed: int, marginal: Marginal | None = None,
                 U: Interaction | None = None, t_grid: Sequence[float] = (),
                 threads: int = 1) -> list[CoverTrial]:
    """Per-sample singular-energy covers of one ball (same samples as event B)."""
    marginal = marginal or Uniform()
    ball = MpBall(Z, center, L)

    def run(i):
        V = sample_potential(marginal, ball.support, derive_seed(seed, "eventB", i))
        H = assemble(ball, Z, g, V, U)
        cover = singular_energy_set(EnergyProfile(H), a, I)
        drift = shift_covariance_check(H, t_grid, a, I) if len(t_grid) else math.nan
        return CoverTrial(cover.count, cover.total_length, cover.K,
                          cover.total_length > b, drift)

    return parallel_map(run, range(trials), threads)


# --- two volumes ---------------------------------------------------------------

def default_abc(params, k: int, L: int) -> tuple[float, float, float]:
    e = (1 + params.theta) ** k
    a = L ** (-0.6 * params.kappa * e)
    b = L ** (-0.2 * params.kappa * e)
    c = L ** (-(params.kappa / 5 - params.d / 2) * e)
    return a, b, c


def check_abc(a: float, b: float, c: float, K: int) -> bool:
    return b <= min(a * c * c / K, c)


@dataclass(frozen=True)
class TwoVolumeTrial:
    event: bool            # some E in I is singular for both balls
    bad_x: bool            # mes of the x-set exceeds b
    bad_y: bool
    close: bool            # ETV: spectra within 4c; CPT: cover pieces within 4b
    containment_ok: bool   # the deterministic step, checked when the ball is good
    count_x: int
    count_y: int
    length_x: float
    length_y: float


@dataclass(frozen=True)
class TwoVolumeReport:
    route: str
    a: float
    b: float
    c: float | None
    event: Estimate
    bad: Estimate
    close: Estimate
    fixed_energy: Estimate
    containment_violations: int
    trials: tuple

    @property
    def bound(self) -> float:
        if self.route == "ETV":
            return self.bad.value + self.close.value
        return 2 * self.fixed_energy.value / self.b + self.close.value

    @property
    def holds(self) -> bool:
        return self.event.value <= self.bound + 3 * math.hypot(self.event.stderr,
                                                               self.close.stderr)


def _close_pieces(A: np.ndarray, B: np.ndarray, tol: float) -> bool:
    if A.shape[0] == 0 or B.shape[0] == 0:
        return False
    return bool(np.min(np.abs(A[:, 0][:, None] - B[:, 0][None, :])) <= tol)


def two_volume_variable_energy(Z: Graph, x: Sequence[int], y: Sequence[int], L: int, g: float,
                               a: float, b: float, I: tuple, trials: int, seed: int,
                               route: str = "ETV", c: float | None = None,
                               marginal: Marginal | None = None, U: Interaction | None = None,
                               E_grid: int = 17, threads: int = 1) -> TwoVolumeReport:
    """P{some E in I has F_x(E) and F_y(E) both above threshold}, decided by covers.

    ETV: threshold 2a, requires a separable pair and b <= min(a c^2 / K, c);
    the reported pieces are P(B_b) and P{dist of spectra <= 4c}. CPT:
    threshold a, requires a weakly separable pair; the pieces are
    2 P_fixed / b and the probability that good covers have left ends within
    4b of each other.
    """
    marginal = marginal or Uniform()
    x, y = as_config(Z, x), as_config(Z, y)
    bx, by = MpBall(Z, x, L), MpBall(Z, y, L)
    K = max(bx.size, by.size)
    if route == "ETV":
        if c is None:
            raise DomainError("ETV route needs c")
        if is_separable_from(Z, x, y, L) is None and is_separable_from(Z, y, x, L) is None:
            raise DomainError("ETV route needs a separable pair")
        if not check_abc(a, b, c, K):
            raise DomainError("need b <= min(a c^2 / K, c)")
        level = 2 * a
    elif route == "CPT":
        if is_weakly_separable(Z, x, y, L) is None:
            raise DomainError("CPT route needs a weakly separable pair")
        level = a
    else:
        raise DomainError(f"unknown route {route!r}")
    support = np.union1d(bx.support, by.support)
    grid = np.linspace(I[0], I[1], E_grid)

    def run(i):
        V = sample_potential(marginal, support, derive_seed(seed, "twovar", i))
        Hx, Hy = assemble(bx, Z, g, V, U), assemble(by, Z, g, V, U)
        px, py = EnergyProfile(Hx), EnergyProfile(Hy)
        cx, cy = singular_energy_set(px, level, I), singular_energy_set(py, level, I)
        event = cx.intersects(cy)
        if route == "ETV":
            mx = singular_energy_set(px, a, I).total_length
            my = singular_energy_set(py, a, I).total_length
            bad_x, bad_y = mx > b, my > b
            close = spectral_gap_between(Hx.spectrum, Hy.spectrum) <= 4 * c
            ok = True
            for bad, cov, H in ((bad_x, cx, Hx), (bad_y, cy, Hy)):
                if not bad and cov.count and \
                        min_gap(cov.intervals, far_set(H.spectrum, c, I)) == 0.0:
                    ok = False
            fixed = px(grid) >= a
        else:
            bad_x, bad_y = cx.total_length > b, cy.total_length > b
            good = not (bad_x or bad_y)
            close = good and _close_pieces(cx.intervals, cy.intervals, 4 * b)
            ok = not (event and good and not close)
            fixed = px(grid) >= a
        return TwoVolumeTrial(event, bad_x, bad_y, close, ok, cx.count, cy.count,
                              cx.total_length, cy.total_length), fixed

    res = parallel_map(run, range(trials), threads)
    rows = tuple(r[0] for r in res)
    fixed = np.array([r[1] for r in res])
    k = int(np.argmax(fixed.mean(axis=0)))

    def est(flags):
        cnt = BinomialCount(int(sum(flags)), trials)
        return Estimate(cnt.p, cnt.stderr, trials)

    return TwoVolumeReport(route=route, a=a, b=b, c=c,
                           event=est(r.event for r in rows),
                           bad=est(r.bad_x or r.bad_y for r in rows),
                           close=est(r.close for r in rows),
                           fixed_energy=est(fixed[:, k]),
                           containment_violations=sum(not r.containment_ok for r in rows),
                           trials=rows)
