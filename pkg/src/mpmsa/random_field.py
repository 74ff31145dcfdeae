"""IID random potentials: marginals, reproducible sampling, the sample-mean
and fluctuation split, and empirical continuity moduli."""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DomainError


def derive_seed(master: int, *keys) -> int:
    """Counter-based 64-bit seed: a hash of the master seed and integer/str keys."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(master) & 0xFFFFFFFFFFFFFFFF))
    for k in keys:
        if isinstance(k, str):
            h.update(b"s" + k.encode())
        else:
            h.update(b"i" + struct.pack("<q", int(k)))
    return int.from_bytes(h.digest(), "little")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class Marginal:
    name = "marginal"
    holder: tuple[float, float] | None = None

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    @property
    def satisfies_holder(self) -> bool:
        return self.holder is not None

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params().items()))))

    def __repr__(self):
        inner = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


class Uniform(Marginal):
    name = "uniform"

    def __init__(self, a: float = 0.0, b: float = 1.0):
        if not b > a:
            raise DomainError("uniform marginal needs b > a")
        self.a, self.b = float(a), float(b)
        self.holder = (1.0 / (self.b - self.a), 1.0)

    def sample(self, rng, size):
        return rng.uniform(self.a, self.b, size)

    def cdf(self, t):
        return np.clip((np.asarray(t, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def params(self):
        return {"a": self.a, "b": self.b}

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def std(self):
        return (self.b - self.a) / math.sqrt(12.0)


class Gaussian(Marginal):
    name = "gaussian"

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        if not sigma > 0:
            raise DomainError("gaussian marginal needs sigma > 0")
        self.mu, self.sigma = float(mu), float(sigma)
        self.holder = (1.0 / (self.sigma * math.sqrt(2 * math.pi)), 1.0)

    def sample(self, rng, size):
        return rng.normal(self.mu, self.sigma, size)

    def cdf(self, t):
        return ndtr((np.asarray(t, dtype=float) - self.mu) / self.sigma)

    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}

    @property
    def mean(self):
        return self.mu

    @property
    def std(self):
        return self.sigma


class Bernoulli(Marginal):
    """Values 0 and 1 with P(1) = p. Not Hölder continuous: negative control only."""
    name = "bernoulli"

    def __init__(self, p: float = 0.5):
        if not 0 < p < 1:
            raise DomainError("bernoulli marginal needs 0 < p < 1")
        self.p = float(p)
        self.holder = None

    def sample(self, rng, size):
        return (rng.random(size) < self.p).astype(float)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, np.where(t < 1, 1 - self.p, 1.0))

    def params(self):
        return {"p": self.p}

    @property
    def mean(self):
        return self.p

    @property
    def std(self):
        return math.sqrt(self.p * (1 - self.p))


MARGINALS = {cls.name: cls for cls in (Uniform, Gaussian, Bernoulli)}


def make_marginal(name: str, **params) -> Marginal:
    try:
        cls = MARGINALS[name]
    except KeyError:
        raise DomainError(f"unknown marginal {name!r}") from None
    return cls(**params)


@dataclass(frozen=True)
class PotentialSample:
    support: np.ndarray   # sorted vertex indices
    values: np.ndarray
    seed: int

    def __post_init__(self):
        if self.support.shape != self.values.shape:
            raise DomainError("support and values differ in shape")

    def at(self, vertices) -> np.ndarray:
        vertices = np.asarray(vertices, dtype=np.int64)
        pos = np.searchsorted(self.support, vertices)
        pos_c = np.minimum(pos, self.support.size - 1)
        if np.any(self.support[pos_c] != vertices):
            raise DomainError("potential queried outside its support")
        return self.values[pos_c]

    def __getitem__(self, v: int) -> float:
        return float(self.at([v])[0])

    def covers(self, vertices) -> bool:
        vertices = np.asarray(vertices, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.support, vertices), self.support.size - 1)
        return bool(np.all(self.support[pos] == vertices))

    def dense(self, n: int, fill: float = np.nan) -> np.ndarray:
        out = np.full(n, fill)
        out[self.support] = self.values
        return out


def sample_potential(marginal: Marginal, support: Iterable[int], seed: int) -> PotentialSample:
    """IID draws in increasing vertex order, so the result depends only on
    (marginal, seed, support)."""
    sup = np.unique(np.asarray(list(support) if not isinstance(support, np.ndarray)
                               else support, dtype=np.int64))
    if sup.size == 0:
        raise DomainError("empty support")
    values = marginal.sample(rng_for(seed), sup.size)
    return PotentialSample(support=sup, values=np.asarray(values, dtype=float), seed=int(seed))


@dataclass(frozen=True)
class MeanFluctuation:
    xi: float
    eta: np.ndarray
    Lam: np.ndarray


def mean_fluctuation_decompose(V: PotentialSample, Lam) -> MeanFluctuation:
    Lam = np.asarray(list(Lam) if not isinstance(Lam, np.ndarray) else Lam, dtype=np.int64)
    if Lam.size == 0 or not V.covers(Lam):
        raise DomainError("Lambda must be a nonempty subset of the potential's support")
    vals = V.at(Lam)
    xi = float(vals.mean())
    return MeanFluctuation(xi=xi, eta=vals - xi, Lam=Lam)


def sup_window_fraction(samples: np.ndarray, s: float) -> float:
    """Empirical sup_t (F(t+s) - F(t)): largest fraction of points in a closed window of width s."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        return 0.0
    if s <= 0:
        return 0.0
    hi = np.searchsorted(x, x + s, side="right")
    return float(np.max(hi - np.arange(x.size)) / x.size)


@dataclass(frozen=True)
class ModulusEstimate:
    s: float
    size: int
    method: str
    values: np.ndarray          # per-trial estimate of nu(s)
    analytic: np.ndarray | None  # per-trial exact value when known
    degenerate: int

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.values.size else 0.0

    @property
    def stderr(self) -> float:
        n = self.values.size
        return float(self.values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")

    def tail(self, threshold: float) -> float:
        """Empirical P{nu(s) >= threshold}, the left side of the W2 tail bound."""
        return float(np.mean(self.values >= threshold)) if self.values.size else 0.0

    def quantiles(self, qs=(0.5, 0.9, 0.99)) -> dict:
        return {q: float(np.quantile(self.values, q)) for q in qs}


def _uniform_conditional_interval(m: Uniform, eta: np.ndarray) -> tuple[float, float]:
    # V = xi + eta must stay in [a, b] coordinatewise; the joint density is flat there
    return m.a - eta.min(), m.b - eta.max()


def estimate_conditional_modulus(marginal: Marginal, size: int, s: float, trials: int,
                                 seed: int, resamples: int = 2000, method: str = "auto",
                                 band: float = 1e-3, max_draws: int = 2_000_000) -> ModulusEstimate:
    """Monte Carlo estimate of nu_xi(s) = sup_t |F(t+s | eta) - F(t | eta)|.

    For each trial a base sample on ``size`` sites fixes the fluctuations eta;
    xi is then resampled from its conditional law and the sup of the
    empirical s-increment is recorded.

    ``method``:
      * ``"exact"``: Gaussian (xi independent of eta, variance sigma^2/size) or
        Uniform (xi | eta uniform on [a - min eta, b - max eta]).
      * ``"rejection"``: draw full vectors and keep those whose fluctuations are
        within ``band`` of the base ones in sup norm; usable for tiny ``size``.
      * ``"auto"``: exact when available, rejection otherwise.
    A conditional law with a single atom (all resamples equal) is reported as
    modulus 1 and counted as degenerate.
    """
    if size < 1:
        raise DomainError("size must be positive")
    if trials < 1:
        raise DomainError("trials must be positive")
    if s < 0:
        raise DomainError("s must be nonnegative")
    if method == "auto":
        method = "exact" if isinstance(marginal, (Gaussian, Uniform)) else "rejection"
    values = np.zeros(trials)
    analytic = np.zeros(trials) if method == "exact" else None
    degenerate = 0
    for i in range(trials):
        rng = rng_for(derive_seed(seed, "modulus", i))
        base = marginal.sample(rng, size)
        eta = base - base.mean()
        if s == 0:
            continue
        if method == "exact":
            if isinstance(marginal, Gaussian):
                sd = marginal.sigma / math.sqrt(size)
                draws = rng.normal(marginal.mu, sd, resamples)
                analytic[i] = 2 * ndtr(s / (2 * sd)) - 1
            elif isinstance(marginal, Uniform):
                lo, hi = _uniform_conditional_interval(marginal, eta)
                length = hi - lo
                if length <= 0:
                    values[i], analytic[i] = 1.0, 1.0
                    degenerate += 1
                    continue
                draws = rng.uniform(lo, hi, resamples)
                analytic[i] = min(1.0, s / length)
            else:
                raise DomainError(f"no exact conditional law for {marginal!r}")
        elif method == "rejection":
            kept = []
            drawn = 0
            while len(kept) < resamples and drawn < max_draws:
                block = marginal.sample(rng, (4096, size))
                drawn += 4096
                m = block.mean(axis=1)
                ok = np.max(np.abs(block - m[:, None] - eta), axis=1) <= band
                kept.extend(m[ok].tolist())
            draws = np.asarray(kept[:resamples])
            if draws.size == 0:
                values[i] = 1.0
                degenerate += 1
                continue
        else:
            raise DomainError(f"unknown method {method!r}")
        if np.ptp(draws) == 0:
            values[i] = 1.0
            degenerate += 1
            continue
        values[i] = sup_window_fraction(draws, s)
    return ModulusEstimate(s=s, size=size, method=method, values=values,
                           analytic=analytic, degenerate=degenerate)


@dataclass(frozen=True)
class HolderRow:
    s: float
    empirical: float
    bound: float
    stderr: float

    @property
    def ok(self) -> bool:
        return self.empirical <= self.bound + 3 * self.stderr


def holder_check(marginal: Marginal, s_grid: Sequence[float], trials: int, seed: int) -> list[HolderRow]:
    """Empirical sup_t (F(t+s) - F(t)) against C_H s^delta for each s.

    The maximising window is located on one half of the draws and its mass is
    measured on the other half, so the reported increment is a binomial
    proportion with an honest standard error instead of a biased maximum.
    """
    if marginal.holder is None:
        raise DomainError(f"{marginal!r} has no Hölder continuity data")
    if trials < 2:
        raise DomainError("need at least two draws")
    C_H, delta = marginal.holder
    draws = marginal.sample(rng_for(derive_seed(seed, "holder")), trials)
    locate, score = np.sort(draws[: trials // 2]), draws[trials // 2:]
    n = score.size
    rows = []
    for s in s_grid:
        hi = np.searchsorted(locate, locate + s, side="right")
        t = locate[int(np.argmax(hi - np.arange(locate.size)))]
        p = float(np.count_nonzero((score >= t) & (score <= t + s)) / n)
        rows.append(HolderRow(s=float(s), empirical=p, bound=C_H * s ** delta,
                              stderr=math.sqrt(max(p * (1 - p), 1.0 / n) / n)))
    return rows
