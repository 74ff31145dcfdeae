"""Fixed-energy multiscale predicates, scale bookkeeping, Monte Carlo
estimation of singularity probabilities, and falsification harnesses for
the deterministic induction steps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import CapacityError, ConfigError, DomainError
from .graph_core import Graph
from .hamiltonian import (EIGEN_CAP, Hamiltonian, Interaction, assemble, green_matrix)
from .mp_geometry import (MpBall, as_config, classify_interactive, is_separable_from,
                          is_weakly_separable, rho_matrix)
from .parallel import parallel_map
from .random_field import Marginal, Uniform, derive_seed, rng_for, sample_potential

SCALE_CAP = 10 ** 7


@dataclass(frozen=True)
class MsaParams:
    alpha: float = 1.5
    beta: float = 0.5
    tau: float = 0.125
    varrho: float = 1.0 / 6.0
    kappa: float = 13.0
    theta: float = 0.01
    m: float = 1.0
    N_hat: int = 2
    d: int = 1
    C_d: float = 3.0
    L0: int = 8
    g: float = 100.0
    r0: int = 1

    @property
    def kappa_floor(self) -> float:
        return 2 * self.alpha * self.N_hat * self.d / (2 - self.alpha)

    @property
    def theta_ceiling(self) -> float:
        return (2 - self.alpha) / self.alpha - 2 * self.N_hat * self.d / self.kappa

    @property
    def ns_exponent(self) -> float:
        return (1 + self.varrho) / self.alpha

    def validate(self) -> "MsaParams":
        if not 1 < self.alpha < 2:
            raise ConfigError("alpha must lie in (1, 2)")
        if not self.kappa > self.kappa_floor:
            raise ConfigError(f"κ > 2αNd/(2−α) violated: kappa={self.kappa} "
                              f"needs > {self.kappa_floor:g}")
        if not 0 < self.theta < self.theta_ceiling:
            raise ConfigError(f"theta must lie in (0, {self.theta_ceiling:g})")
        if self.m <= 0:
            raise ConfigError("mass m must be positive")
        if self.N_hat < 1 or self.d < 1:
            raise ConfigError("N_hat and d must be positive")
        if self.L0 < 2:
            raise ConfigError("L0 must be at least 2")
        if self.beta <= 0 or self.tau <= 0 or self.varrho <= 0:
            raise ConfigError("beta, tau, varrho must be positive")
        return self


def gamma(m: float, L: float, tau: float = 0.125) -> float:
    return m * (1 + L ** (-tau))


def gamma_graded(m: float, L: float, n: int, N_hat: int, tau: float = 0.125) -> float:
    """Particle-graded decay rate, (1 + L^-tau) raised to N_hat - n + 1."""
    return m * (1 + L ** (-tau)) ** (N_hat - n + 1)


def scale_sequence(L0: int, alpha: float, k_max: int, cap: int = SCALE_CAP) -> list[int]:
    if L0 < 2:
        raise DomainError("L0 must be at least 2")
    out = [int(L0)]
    for _ in range(k_max):
        nxt = int(math.floor(out[-1] ** alpha))
        if nxt <= out[-1]:
            raise DomainError(f"scale sequence not strictly increasing at {out[-1]} -> {nxt}")
        if nxt > cap:
            raise CapacityError(f"scale {nxt} exceeds cap", size=nxt, cap=cap)
        out.append(nxt)
    return out


def target_exponent(params: MsaParams, N: int, k: int) -> float:
    if not 1 <= N <= params.N_hat:
        raise DomainError("need 1 <= N <= N_hat")
    return 3.0 ** (params.N_hat - N) * params.kappa * (1 + params.theta) ** k


def resonance_threshold(L: float, beta: float) -> float:
    return math.exp(-L ** beta)


def is_E_resonant(H_or_spectrum, E: float, L: float, beta: float = 0.5) -> bool:
    spec = H_or_spectrum.spectrum if isinstance(H_or_spectrum, Hamiltonian) else \
        np.asarray(H_or_spectrum, dtype=float)
    return bool(np.min(np.abs(spec - E)) < resonance_threshold(L, beta))


# --- non-singularity ---------------------------------------------------------

@dataclass(frozen=True)
class NSResult:
    ns: bool
    resonant: bool
    vacuous: bool
    n_pairs: int
    boundary_size: int
    # max over qualifying pairs of log(|dB| |G|) + gamma rho; <= 0 means the bound holds
    worst_log_margin: float = -math.inf


@lru_cache(maxsize=16)
def _qualifying_pairs(Z: Graph, center: tuple, L: int, threshold: float):
    ball = MpBall(Z, center, L)
    R = rho_matrix(Z, ball.configs(), ball.configs())
    i, j = np.nonzero(R >= threshold)
    keep = i <= j     # G is symmetric
    return i[keep], j[keep], R[i[keep], j[keep]].astype(float)


def qualifying_pairs(ball: MpBall, threshold: float):
    return _qualifying_pairs(ball.Z, ball.center, ball.L, float(threshold))


def ns_check(H: Hamiltonian, E: float, m: float, params: MsaParams,
             ball: MpBall | None = None, green: np.ndarray | None = None,
             n: int | None = None) -> NSResult:
    """(E, m)-non-singularity of a polydisk Hamiltonian.

    Resonant balls count as singular; a ball with no pair at rho >= L^(7/9)
    (default exponents) is non-singular by an empty quantifier and is flagged.
    Passing the particle count ``n`` switches to the particle-graded rate.
    """
    ball = ball or H.ball
    if ball is None:
        raise DomainError("non-singularity is defined for polydisk Hamiltonians")
    L = ball.L
    dB = ball.edge_boundary_size()
    resonant = is_E_resonant(H, E, L, params.beta)
    i, j, r = qualifying_pairs(ball, L ** params.ns_exponent)
    if i.size == 0:
        return NSResult(not resonant, resonant, True, 0, dB)
    if resonant:
        return NSResult(False, True, False, int(i.size), dB, math.inf)
    G = green_matrix(H, E, check=False) if green is None else green
    vals = np.abs(G[i, j])
    rate = gamma(m, L, params.tau) if n is None else gamma_graded(m, L, n, params.N_hat,
                                                                  params.tau)
    with np.errstate(divide="ignore"):
        margin = np.log(dB * vals) + rate * r
    worst = float(margin.max())
    ok = bool(np.all(dB * vals <= np.exp(-rate * r)))
    return NSResult(ok, False, False, int(i.size), dB, worst)


def is_EmNS(ball: MpBall, H: Hamiltonian, E: float, m: float, params: MsaParams) -> bool:
    return ns_check(H, E, m, params, ball=ball).ns


@dataclass(frozen=True)
class PredicateOutcome:
    er: bool
    ns: bool
    et: bool | None
    pi: bool
    vacuous: bool = False


# --- tunneling ---------------------------------------------------------------

def inner_ball_centers(outer: MpBall, L_in: int) -> list[tuple]:
    """Centres w in the outer ball with ball(w, L_in) inside it."""
    per_factor = []
    for c, f in zip(outer.center, outer.factors):
        inside = np.zeros(outer.Z.n, dtype=bool)
        inside[f] = True
        per_factor.append([int(w) for w in f if inside[outer.Z.ball(w, L_in)].all()])
    grids = np.meshgrid(*per_factor, indexing="ij")
    return [tuple(int(v) for v in row) for row in np.stack([g.ravel() for g in grids], axis=1)]


def sub_rows(outer: MpBall, inner: MpBall) -> np.ndarray:
    """Rows of the outer ball holding the inner ball's configurations, in inner order."""
    pos = [np.searchsorted(fo, fi) for fo, fi in zip(outer.factors, inner.factors)]
    grids = np.meshgrid(*pos, indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in grids), outer.shape)


def inner_hamiltonian(H_outer: Hamiltonian, inner: MpBall) -> Hamiltonian:
    rows = sub_rows(H_outer.ball, inner)
    pot = None if H_outer.diagonal_potential is None else H_outer.diagonal_potential[rows]
    return Hamiltonian(H_outer.Z, inner.configs(), H_outer.restricted(rows), H_outer.g,
                       inner, pot)


@dataclass(frozen=True)
class TunnelingResult:
    tunneling: bool
    singular_centers: tuple
    pair: tuple | None
    n_inner: int


def singular_inner_balls(H_outer: Hamiltonian, E: float, m: float, L_in: int,
                         params: MsaParams) -> tuple[list[tuple], int]:
    outer = H_outer.ball
    centers = inner_ball_centers(outer, L_in)
    sing = []
    for w in centers:
        inner = MpBall(outer.Z, w, L_in)
        if not ns_check(inner_hamiltonian(H_outer, inner), E, m, params, ball=inner).ns:
            sing.append(w)
    return sing, len(centers)


def is_E_tunneling(H_outer: Hamiltonian, E: float, m: float, L_in: int,
                   params: MsaParams, stop_early: bool = False) -> TunnelingResult:
    """Search for two vertex-disjoint (E, m)-singular L_in-balls inside the outer ball.

    With ``stop_early`` the scan ends at the first disjoint singular pair, so
    ``singular_centers`` may then be incomplete.
    """
    outer = H_outer.ball
    if outer is None or outer.L <= L_in:
        raise DomainError("outer ball must be a polydisk of radius larger than L_in")
    centers = inner_ball_centers(outer, L_in)
    sing, balls = [], []
    pair = None
    for w in centers:
        inner = MpBall(outer.Z, w, L_in)
        if ns_check(inner_hamiltonian(H_outer, inner), E, m, params, ball=inner).ns:
            continue
        if pair is None:
            for w2, b2 in zip(sing, balls):
                if inner.disjoint_from(b2):
                    pair = (w2, w)
                    break
        sing.append(w)
        balls.append(inner)
        if pair is not None and stop_early:
            break
    return TunnelingResult(pair is not None, tuple(sing), pair, len(centers))


# --- lemma harnesses ---------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    hypothesis: bool
    conclusion: bool | None
    details: dict = field(default_factory=dict)

    @property
    def counterexample(self) -> bool:
        return bool(self.hypothesis and not self.conclusion)


def verify_lemma_nr_nt_ns(H_outer: Hamiltonian, E: float, m: float, L_in: int,
                          params: MsaParams) -> Finding:
    """Non-resonant and non-tunneling outer ball must be non-singular."""
    L = H_outer.ball.L
    resonant = is_E_resonant(H_outer, E, L, params.beta)
    if resonant:
        return Finding(False, None, {"resonant": True})
    tun = is_E_tunneling(H_outer, E, m, L_in, params, stop_early=True)
    if tun.tunneling:
        return Finding(False, None, {"tunneling": True})
    res = ns_check(H_outer, E, m, params)
    return Finding(True, res.ns, {"worst_log_margin": res.worst_log_margin,
                                  "singular_inner": len(tun.singular_centers),
                                  "vacuous": res.vacuous})


def pitrons_hypothesis_check(H: Hamiltonian, E: float, m: float, params: MsaParams,
                             V, U: Interaction | None = None) -> Finding:
    """Hypotheses and conclusion of the partially interactive non-singularity lemma.

    (a) the full ball is E-non-resonant; (b) the first factor ball is
    (E - mu, m)-NS for every eigenvalue mu of the second factor; (c) the
    symmetric statement. If all hold, the full ball must be (E, m)-NS.
    Each ball is judged at the decay rate graded by its own particle count.
    """
    U = U or Interaction.none()
    ball = H.ball
    info = classify_interactive(ball.Z, ball.center, ball.L, params.r0, require_scale=False)
    if not info.partially_interactive:
        raise DomainError("ball is not partially interactive")
    dec = info.decomposition
    b1, b2 = ball.sub_ball(dec.J_prime), ball.sub_ball(dec.J_double)
    H1, H2 = assemble(b1, ball.Z, H.g, V, U), assemble(b2, ball.Z, H.g, V, U)
    lam, mu = H1.spectrum, H2.spectrum
    sums = np.sort(np.add.outer(lam, mu).ravel())
    spec_res = float(np.max(np.abs(np.sort(H.spectrum) - sums)))
    details = {"spectrum_residual": spec_res}
    if is_E_resonant(H, E, ball.L, params.beta):
        return Finding(False, None, {**details, "failed": "a"})
    n1, n2 = len(dec.J_prime), len(dec.J_double)
    for e2 in mu:
        if not ns_check(H1, E - e2, m, params, n=n1).ns:
            return Finding(False, None, {**details, "failed": "b"})
    for e1 in lam:
        if not ns_check(H2, E - e1, m, params, n=n2).ns:
            return Finding(False, None, {**details, "failed": "c"})
    res = ns_check(H, E, m, params, n=len(ball.center))
    return Finding(True, res.ns, {**details, "worst_log_margin": res.worst_log_margin,
                                  "vacuous": res.vacuous})


# --- Monte Carlo estimation ----------------------------------------------------

@dataclass
class BinomialCount:
    hits: int = 0
    trials: int = 0

    def add(self, hit: bool) -> "BinomialCount":
        self.hits += int(bool(hit))
        self.trials += 1
        return self

    def merge(self, other: "BinomialCount") -> "BinomialCount":
        return BinomialCount(self.hits + other.hits, self.trials + other.trials)

    @property
    def p(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        if not self.trials:
            return 0.0
        p = self.p
        return math.sqrt(p * (1 - p) / self.trials)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class ScaleEstimates:
    k: int
    L_k: int
    P_hat: Estimate
    Q_hat: Estimate
    S_hat: Estimate | None
    target: float
    energies: tuple


def _energy_grid(E) -> np.ndarray:
    return np.atleast_1d(np.asarray(E, dtype=float))


@dataclass(frozen=True)
class ScaleTrial:
    singular: tuple     # per energy
    resonant: tuple
    pi_singular: tuple | None


def scale_trial(Z: Graph, center: tuple, L: int, L_prev: int | None, energies: np.ndarray,
                params: MsaParams, marginal: Marginal, U: Interaction, seed: int) -> ScaleTrial:
    ball = MpBall(Z, center, L)
    if ball.size > EIGEN_CAP:
        raise CapacityError(f"ball of {ball.size} configurations exceeds the eigensolve cap",
                            size=ball.size, cap=EIGEN_CAP)
    V = sample_potential(marginal, ball.support, seed)
    H = assemble(ball, Z, params.g, V, U)
    sing, res, pis = [], [], []
    pi_inner = None
    if L_prev is not None:
        pi_inner = []
        for w in inner_ball_centers(ball, L_prev):
            info = classify_interactive(Z, w, L_prev, params.r0, require_scale=False)
            if info.partially_interactive:
                pi_inner.append(MpBall(Z, w, L_prev))
    for E in energies:
        r = ns_check(H, E, params.m, params)
        sing.append(not r.ns)
        res.append(r.resonant)
        if pi_inner is not None:
            pis.append(any(not ns_check(inner_hamiltonian(H, b), E, params.m, params, ball=b).ns
                           for b in pi_inner))
    return ScaleTrial(tuple(sing), tuple(res), tuple(pis) if pi_inner is not None else None)


def _sup_over_energies(counts: list[BinomialCount], factor: float = 1.0) -> Estimate:
    best = max(counts, key=lambda c: c.hits)
    return Estimate(factor * best.p, factor * best.stderr, best.trials)


def mc_estimate_scale(Z: Graph, params: MsaParams, N: int, k: int, E, trials: int, seed: int,
                      center: Sequence[int] | None = None, marginal: Marginal | None = None,
                      U: Interaction | None = None, include_S: bool = True,
                      threads: int = 1, min_trials: int = 100) -> ScaleEstimates:
    """Binomial estimates of P_k (singular), Q_k (4 x resonant) and S_k (some
    partially interactive L_{k-1}-ball inside is singular) at one centre.

    For an energy grid each estimator reports its largest value over the grid.
    """
    if trials < min_trials:
        raise DomainError(f"need at least {min_trials} trials")
    marginal = marginal or Uniform()
    U = U or Interaction.none()
    scales = scale_sequence(params.L0, params.alpha, k)
    L, L_prev = scales[k], (scales[k - 1] if k > 0 and include_S else None)
    if center is None:
        center = Z.index(0) if Z.labels is not None else 0
        center = tuple([center] * N) if N == 1 else None
    if center is None:
        raise DomainError("a centre configuration is required for N > 1")
    center = as_config(Z, center)
    energies = _energy_grid(E)

    def run(i):
        return scale_trial(Z, center, L, L_prev, energies, params, marginal, U,
                           derive_seed(seed, "scale", k, i))

    results = parallel_map(run, range(trials), threads)
    nE = energies.size
    P = [BinomialCount() for _ in range(nE)]
    Q = [BinomialCount() for _ in range(nE)]
    S = [BinomialCount() for _ in range(nE)] if L_prev is not None else None
    for r in results:
        for e in range(nE):
            P[e].add(r.singular[e])
            Q[e].add(r.resonant[e])
            if S is not None:
                S[e].add(r.pi_singular[e])
    return ScaleEstimates(k=k, L_k=L, P_hat=_sup_over_energies(P),
                          Q_hat=_sup_over_energies(Q, 4.0),
                          S_hat=_sup_over_energies(S) if S is not None else None,
                          target=float(L) ** (-target_exponent(params, N, k)),
                          energies=tuple(float(e) for e in energies))


@dataclass(frozen=True)
class RecursionReport:
    lhs: float
    rhs: float
    sigma: float
    margin: float          # rhs + 3 sigma - lhs
    holds: bool
    decreasing: bool
    s_bound: float | None = None
    s_bound_holds: bool | None = None


def verify_recursion(est_k: ScaleEstimates, est_k1: ScaleEstimates, params: MsaParams,
                     N: int) -> RecursionReport:
    """P_{k+1} <= 1/2 C^{2N} L_{k+1}^{2Nd} P_k^2 + 1/4 Q_{k+1} + S_{k+1}, with 3 sigma slack."""
    if est_k1.k != est_k.k + 1:
        raise DomainError("estimates must be at consecutive scales")
    coeff = 0.5 * params.C_d ** (2 * N) * est_k1.L_k ** (2 * N * params.d)
    S = est_k1.S_hat or Estimate(0.0, 0.0, est_k1.P_hat.trials)
    Pk = est_k.P_hat
    rhs = coeff * Pk.value ** 2 + 0.25 * est_k1.Q_hat.value + S.value
    se_rhs = math.sqrt((coeff * 2 * Pk.value * Pk.stderr) ** 2
                       + (0.25 * est_k1.Q_hat.stderr) ** 2 + S.stderr ** 2)
    sigma = math.sqrt(est_k1.P_hat.stderr ** 2 + se_rhs ** 2)
    lhs = est_k1.P_hat.value
    margin = rhs + 3 * sigma - lhs
    dec = lhs <= Pk.value + 3 * math.hypot(Pk.stderr, est_k1.P_hat.stderr)
    s_bound = 0.25 * params.C_d ** (-2 * N) * float(est_k1.L_k) ** (
        -params.kappa * (1 + params.theta) ** est_k1.k)
    return RecursionReport(lhs, rhs, sigma, margin, margin >= 0, dec, s_bound,
                           S.value <= s_bound + 3 * S.stderr)


# --- Wegner and two-volume statistics ----------------------------------------

@dataclass(frozen=True)
class CurveRow:
    s: float
    hits: int
    trials: int

    @property
    def p(self) -> float:
        return self.hits / self.trials

    @property
    def stderr(self) -> float:
        p = self.p
        return math.sqrt(p * (1 - p) / self.trials)


@dataclass(frozen=True)
class DistanceCurve:
    distances: np.ndarray        # per-trial statistic, in trial order
    rows: tuple
    strict: bool                 # P{dist < s} when True, P{dist <= s} otherwise

    def ratio(self) -> np.ndarray:
        return np.array([r.p / r.s for r in self.rows])

    def ratio_spread(self) -> float:
        r = self.ratio()
        return float(r.max() / r.min()) if r.min() > 0 else math.inf

    def slope(self) -> float:
        """Least-squares slope of log p against log s over rows with p > 0."""
        pts = [(math.log(r.s), math.log(r.p)) for r in self.rows if r.hits > 0]
        if len(pts) < 2:
            return math.nan
        x, y = np.array(pts).T
        return float(np.polyfit(x, y, 1)[0])


def _curve(dist: np.ndarray, s_grid, strict: bool) -> DistanceCurve:
    rows = []
    for s in s_grid:
        hits = int(np.count_nonzero(dist < s if strict else dist <= s))
        rows.append(CurveRow(float(s), hits, dist.size))
    return DistanceCurve(dist, tuple(rows), strict)


def wegner_curve(Z: Graph, center: Sequence[int], L: int, g: float, E: float, s_grid,
                 trials: int, seed: int, marginal: Marginal | None = None,
                 U: Interaction | None = None, threads: int = 1) -> DistanceCurve:
    """Empirical P{dist(spectrum, E) < s} for a random polydisk Hamiltonian."""
    marginal = marginal or Uniform()
    U = U or Interaction.none()
    ball = MpBall(Z, center, L)
    if ball.size > EIGEN_CAP:
        raise CapacityError("ball exceeds the eigensolve cap", size=ball.size, cap=EIGEN_CAP)

    def run(i):
        V = sample_potential(marginal, ball.support, derive_seed(seed, "wegner", i))
        return assemble(ball, Z, g, V, U).spectral_distance(E)

    dist = np.array(parallel_map(run, range(trials), threads))
    return _curve(dist, s_grid, strict=True)


def spectral_gap_between(a: np.ndarray, b: np.ndarray) -> float:
    """min |lambda - mu| over two sorted spectra."""
    pos = np.clip(np.searchsorted(b, a), 1, b.size - 1) if b.size > 1 else np.zeros(a.size, int)
    best = np.abs(a - b[pos])
    if b.size > 1:
        best = np.minimum(best, np.abs(a - b[pos - 1]))
    return float(best.min())


def two_volume_distance_curve(Z: Graph, x: Sequence[int], y: Sequence[int], L: int, g: float,
                              s_grid, trials: int, seed: int, marginal: Marginal | None = None,
                              U: Interaction | None = None, require: str = "separable",
                              threads: int = 1) -> DistanceCurve:
    """Empirical P{dist(spectrum at x, spectrum at y) <= s} on one shared potential."""
    marginal = marginal or Uniform()
    U = U or Interaction.none()
    x, y = as_config(Z, x), as_config(Z, y)
    if require == "separable":
        ok = is_separable_from(Z, x, y, L) is not None or is_separable_from(Z, y, x, L) is not None
    elif require == "weak":
        ok = is_weakly_separable(Z, x, y, L) is not None
    elif require == "none":
        ok = True
    else:
        raise DomainError(f"unknown requirement {require!r}")
    if not ok:
        raise DomainError(f"balls at {x} and {y} are not {require}ly separated")
    bx, by = MpBall(Z, x, L), MpBall(Z, y, L)
    support = np.union1d(bx.support, by.support)

    def run(i):
        V = sample_potential(marginal, support, derive_seed(seed, "twovolume", i))
        sx = assemble(bx, Z, g, V, U).spectrum
        sy = assemble(by, Z, g, V, U).spectrum
        return spectral_gap_between(sx, sy)

    dist = np.array(parallel_map(run, range(trials), threads))
    return _curve(dist, s_grid, strict=False)


# --- harness drivers -------------------------------------------------------------

@dataclass(frozen=True)
class HarnessRun:
    lemma: str
    scale: int
    findings: tuple

    @property
    def hypothesis_true(self) -> int:
        return sum(f.hypothesis for f in self.findings)

    @property
    def counterexamples(self) -> int:
        return sum(f.counterexample for f in self.findings)


def _harness_energy(seed: int, key: str, i: int, top: float) -> float:
    return float(rng_for(derive_seed(seed, key, "E", i)).uniform(0.0, top))


def lemma_nr_nt_ns_run(N: int, L_in: int, g: float, trials: int, seed: int,
                       params: MsaParams, marginal: Marginal | None = None,
                       U: Interaction | None = None, threads: int = 1) -> HarnessRun:
    """Lemma harness on one-dimensional balls of radius floor(L_in^alpha).

    Trials alternate between a ball centred on the diagonal and one whose
    particles sit three radii apart; energies are uniform on [0, g N].
    """
    marginal = marginal or Uniform()
    U = U or Interaction.none()
    L_out = scale_sequence(L_in, params.alpha, 1)[1]
    Z = _line(4 * L_out + 1)
    o = Z.index(0)
    centers = [tuple([o] * N)]
    if N > 1:
        centers.append(tuple(Z.index(3 * L_out * j) for j in range(N)))

    def run(i):
        ball = MpBall(Z, centers[i % len(centers)], L_out)
        V = sample_potential(marginal, ball.support, derive_seed(seed, "lemma62", i))
        H = assemble(ball, Z, g, V, U)
        E = _harness_energy(seed, "lemma62", i, g * N)
        return verify_lemma_nr_nt_ns(H, E, params.m, L_in, params)

    return HarnessRun("nr-nt-ns", L_in, tuple(parallel_map(run, range(trials), threads)))


def pitrons_run(L: int, g: float, trials: int, seed: int, params: MsaParams,
                marginal: Marginal | None = None, U: Interaction | None = None,
                threads: int = 1) -> HarnessRun:
    """Lemma harness on two-particle balls whose particles sit 24 L apart."""
    marginal = marginal or Uniform()
    U = U or Interaction.none()
    Z = _line(13 * L + 1)
    ball = MpBall(Z, (Z.index(-12 * L), Z.index(12 * L)), L)

    def run(i):
        V = sample_potential(marginal, ball.support, derive_seed(seed, "pitrons", i))
        H = assemble(ball, Z, g, V, U)
        E = _harness_energy(seed, "pitrons", i, 2 * g)
        return pitrons_hypothesis_check(H, E, params.m, params, V, U)

    return HarnessRun("pitrons", L, tuple(parallel_map(run, range(trials), threads)))


@lru_cache(maxsize=8)
def _line(half_width: int) -> Graph:
    from .graph_core import build_lattice_segment
    return build_lattice_segment(1, half_width)


@dataclass(frozen=True)
class FloorCalibration:
    floor: int | None                 # None when no candidate came out clean
    pilots: tuple                     # (scale, hypothesis-true, counterexamples) per candidate


def calibrate_lemma_floor(harness, candidates: Sequence[int], pilot: int, seed: int
                          ) -> FloorCalibration:
    """Smallest candidate scale whose pilot run has hypothesis-true samples
    and no counterexample. ``harness(scale, trials, seed)`` returns a HarnessRun.

    The pilot uses its own seed stream so the acceptance run that follows
    sees fresh samples.
    """
    rows = []
    floor = None
    for c in candidates:
        res = harness(c, pilot, derive_seed(seed, "calibration", c))
        rows.append((int(c), res.hypothesis_true, res.counterexamples))
        if res.hypothesis_true > 0 and res.counterexamples == 0:
            floor = int(c)
            break
    return FloorCalibration(floor, tuple(rows))
