"""Experiment configuration, orchestration, persistence and the self-check suite.

A configuration is a small INI document with sections ``params``,
``ensemble``, ``graph``, ``experiment`` and ``run``. ``run`` executes it and
writes plot-ready CSV files plus a ``manifest.json`` holding the config echo,
timestamps, trial counts and a sha256 digest of every output. All randomness
comes from the master seed, so identical configs give identical CSV bytes
whatever the thread count.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import CapacityError, ConfigError, ConsistencyError, DomainError, ResonanceError
from .graph_core import Graph, LaplacianKind, build_lattice_segment, verify_gri
from .hamiltonian import Interaction, assemble, green, pitrons_tensor_check
from .localization_analysis import (CorrelatorTable, bessel_run, correlator_decay_experiment,
                                    strip_domain)
from .mp_geometry import (MpBall, canonical_decomposition, config_labels, configuration_graph,
                          format_config_literal, parse_config_literal)
from .msa_engine import (MsaParams, calibrate_lemma_floor, lemma_nr_nt_ns_run, mc_estimate_scale,
                         pitrons_run, verify_recursion, wegner_curve)
from .random_field import MARGINALS, Marginal, Uniform, derive_seed, make_marginal, rng_for, \
    sample_potential
from .spectral_reduction import cover_for, cover_trials, shift_covariance_check
from .subharmonic import green_subharmonicity_certificate

KINDS = ("wegner", "msa-scan", "spectral-reduce", "correlator", "verify-lemmas")
LEMMAS = ("nr-nt-ns", "pitrons", "bessel")

# fixed CSV headers, one file per kind
SCHEMAS = {
    "wegner": ("wegner.csv", ("s", "hits", "trials", "p", "stderr", "ratio")),
    "msa-scan": ("msa_scan.csv", ("k", "L_k", "estimator", "value", "stderr", "target",
                                  "trials")),
    "spectral-reduce": ("spectral_reduce.csv", ("trial", "count", "total_length", "K",
                                                "event_B", "shift_drift")),
    "correlator": ("correlator.csv", ("x", "y", "rho", "rho_sym", "mean", "stderr", "trials")),
    "verify-lemmas": ("verify_lemmas.csv", ("lemma", "scale", "trial", "hypothesis",
                                            "conclusion", "counterexample")),
}


# --- option parsing -------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    text = text.strip()
    if text.startswith("logspace:"):
        lo, hi, n = text.split(":")[1:]
        return tuple(float(v) for v in np.logspace(float(lo), float(hi), int(n)))
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _interval(text: str) -> tuple:
    lo, hi = _floats(text)
    if not hi > lo:
        raise ValueError("interval needs hi > lo")
    return (lo, hi)


def _words(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _config(text: str):
    return parse_config_literal(text) if text.strip() else None


# per kind: option -> (parser, default text)
OPTIONS: dict[str, dict[str, tuple[Callable, str]]] = {
    "wegner": {"N": (int, "2"), "L": (int, "4"), "E": (float, ""), "center": (_config, ""),
               "s_grid": (_floats, "logspace:-4:-2:9")},
    "msa-scan": {"N": (int, "2"), "scales": (int, "1"), "E": (_floats, ""),
                 "center": (_config, ""), "include_S": (_bool, "true"),
                 "min_trials": (int, "1")},
    "spectral-reduce": {"N": (int, "1"), "L": (int, "4"), "center": (_config, ""),
                        "a": (float, "0.01"), "b": (float, "0.1"), "I": (_interval, ""),
                        "shifts": (_floats, "")},
    "correlator": {"N": (int, "2"), "lo": (int, "-16"), "hi": (int, "16"),
                   "dmin": (int, "-3"), "dmax": (int, "3"), "sector": (str, "symmetric"),
                   "rmin": (int, "4"), "rmax": (int, "20"), "orbit": (_bool, "true"),
                   "pairs_file": (str, ""), "I": (_interval, "-1,250"),
                   "distance": (str, "rhos"), "fit": (str, "both"), "floor": (int, "3"),
                   "refine": (_bool, "true")},
    "verify-lemmas": {"lemmas": (_words, "nr-nt-ns,pitrons,bessel"), "N": (int, "2"),
                      "scale": (int, "3"), "calibrate": (_ints, ""), "pilot": (int, "200"),
                      "enforce": (_bool, "true")},
}

_ENSEMBLE_KEYS = ("marginal", "interaction")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(t) for t in v)
    return str(v)


# --- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: MsaParams = field(default_factory=MsaParams)
    marginal: str = "uniform"
    marginal_params: tuple = ()          # sorted (name, float) pairs
    interaction: tuple = (0.0,)          # pair potential at distances 0..r0
    d: int = 1
    half_width: int = 40
    options: tuple = ()                  # sorted (key, text) pairs
    trials: int = 100
    seed: int = 0
    out: str = "results"

    # -- accessors
    def option(self, key: str):
        spec = OPTIONS[self.kind]
        if key not in spec:
            raise ConfigError(f"unknown option {key!r} for {self.kind}")
        parser, default = spec[key]
        text = dict(self.options).get(key, default)
        if text == "" and parser not in (str,):
            return None
        try:
            return parser(text)
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None

    def with_options(self, **kw) -> "ExperimentConfig":
        opts = dict(self.options)
        opts.update({k: _fmt(v) for k, v in kw.items()})
        return dataclasses.replace(self, options=tuple(sorted(opts.items())))

    def make_marginal(self) -> Marginal:
        try:
            return make_marginal(self.marginal, **dict(self.marginal_params))
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"bad marginal: {exc}") from None

    def make_interaction(self) -> Interaction:
        try:
            return Interaction(len(self.interaction) - 1, self.interaction)
        except DomainError as exc:
            raise ConfigError(f"bad interaction: {exc}") from None

    def make_graph(self) -> Graph:
        try:
            return build_lattice_segment(self.d, self.half_width)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    # -- validation
    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        self.params.validate()
        if self.trials < 0:
            raise ConfigError("trials must be nonnegative")
        if self.d not in (1, 2):
            raise ConfigError("only d = 1 or d = 2 lattices are supported")
        if self.half_width < 1:
            raise ConfigError("half_width must be positive")
        self.make_marginal()
        if any(u < 0 for u in self.interaction):
            raise ConfigError("interaction values must be nonnegative")
        self.make_interaction()
        for key, _ in self.options:
            self.option(key)
        for key in OPTIONS[self.kind]:
            self.option(key)
        N = self.option("N")
        if not 1 <= N <= self.params.N_hat:
            raise ConfigError(f"need 1 <= N <= N_hat = {self.params.N_hat}")
        if self.kind == "correlator":
            if self.option("sector") not in ("none", "symmetric", "antisymmetric"):
                raise ConfigError("sector must be none, symmetric or antisymmetric")
            if self.option("distance") not in ("rho", "rhos"):
                raise ConfigError("distance must be rho or rhos")
            if self.option("fit") not in ("exp", "subexp", "both"):
                raise ConfigError("fit must be exp, subexp or both")
            if self.d != 1:
                raise ConfigError("correlator domains are one-dimensional")
        if self.kind == "verify-lemmas":
            bad = set(self.option("lemmas")) - set(LEMMAS)
            if bad:
                raise ConfigError(f"unknown lemmas {sorted(bad)}")
        if self.kind == "spectral-reduce" and not self.option("a") > 0:
            raise ConfigError("a must be positive")
        if self.kind == "spectral-reduce" and self.option("I"):
            lo, hi = self.option("I")
            if not 0 < hi - lo <= 1:
                raise ConfigError("spectral-reduce needs an interval of length in (0, 1]")
        if self.kind == "wegner" and not self.option("s_grid"):
            raise ConfigError("empty s grid")
        return self

    # -- text form
    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["params"] = {f.name: _fmt(getattr(self.params, f.name))
                        for f in dataclasses.fields(MsaParams)}
        ens = {"marginal": self.marginal,
               "interaction": ", ".join(repr(float(u)) for u in self.interaction)}
        ens.update({k: repr(float(v)) for k, v in self.marginal_params})
        cp["ensemble"] = ens
        cp["graph"] = {"d": str(self.d), "half_width": str(self.half_width)}
        cp["experiment"] = {"kind": self.kind, **dict(self.options)}
        cp["run"] = {"trials": str(self.trials), "seed": str(self.seed), "out": self.out}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from None
        if not cp.has_section("experiment") or "kind" not in cp["experiment"]:
            raise ConfigError("config needs [experiment] kind = ...")
        defaults = MsaParams()
        pvals = {}
        if cp.has_section("params"):
            for key, text_v in cp["params"].items():
                if not hasattr(defaults, key):
                    raise ConfigError(f"unknown parameter {key!r}")
                typ = type(getattr(defaults, key))
                try:
                    pvals[key] = typ(text_v)
                except ValueError:
                    raise ConfigError(f"bad value for {key}: {text_v!r}") from None
        params = MsaParams(**pvals)
        ens = dict(cp["ensemble"]) if cp.has_section("ensemble") else {}
        marginal = ens.pop("marginal", "uniform")
        inter = ens.pop("interaction", "0.0")
        try:
            interaction = _floats(inter)
            mparams = tuple(sorted((k, float(v)) for k, v in ens.items()))
            graph = dict(cp["graph"]) if cp.has_section("graph") else {}
            d = int(graph.get("d", 1))
            hw = int(graph.get("half_width", 40))
            run = dict(cp["run"]) if cp.has_section("run") else {}
            trials = int(run.get("trials", 100))
            seed = int(run.get("seed", 0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        opts = dict(cp["experiment"])
        kind = opts.pop("kind")
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        return cls(kind=kind, params=params, marginal=marginal, marginal_params=mparams,
                   interaction=interaction, d=d, half_width=hw,
                   options=tuple(sorted(opts.items())), trials=trials, seed=seed,
                   out=run.get("out", "results"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None


# --- manifests and outputs ---------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    config: str
    version: str
    started: str
    finished: str
    trial_counts: dict
    outputs: dict            # file name -> sha256
    summary: dict

    @property
    def hard_violations(self) -> int:
        return int(self.summary.get("hard_violations", 0))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _utc() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue().encode()


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Writer:
    """Collects outputs in memory, writes them at the end, cleans up on failure."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, bytes] = {}

    def add(self, name: str, data: bytes):
        self.files[name] = data

    def flush(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        written = []
        try:
            for name, data in self.files.items():
                path = self.out / name
                path.write_bytes(data)
                written.append(path)
        except BaseException:
            for p in written:
                p.unlink(missing_ok=True)
            raise
        return {name: hashlib.sha256(data).hexdigest() for name, data in self.files.items()}


# --- experiment kinds ------------------------------------------------------------------

def _center(cfg: ExperimentConfig, Z: Graph, N: int):
    lit = cfg.option("center")
    if lit is None:
        origin = (0,) * cfg.d if cfg.d > 1 else 0
        return tuple([Z.index(origin)] * N)
    if len(lit) != N:
        raise ConfigError(f"centre {lit} does not have {N} particles")
    return tuple(Z.index(v) for v in lit)


def _default_energy(cfg: ExperimentConfig, N: int) -> float:
    m = cfg.make_marginal()
    return N * (2 * cfg.d + cfg.params.g * float(m.mean))


def _run_wegner(cfg, Z, marginal, U, threads, w: _Writer) -> tuple[dict, dict]:
    N, L = cfg.option("N"), cfg.option("L")
    E = cfg.option("E")
    E = _default_energy(cfg, N) if E is None else E
    s_grid = cfg.option("s_grid")
    name, header = SCHEMAS["wegner"]
    if cfg.trials == 0:
        w.add(name, csv_bytes(header, []))
        return {"0": 0}, {"E": E}
    curve = wegner_curve(Z, _center(cfg, Z, N), L, cfg.params.g, E, s_grid, cfg.trials,
                         cfg.seed, marginal, U, threads)
    rows = [(r.s, r.hits, r.trials, r.p, r.stderr, r.p / r.s) for r in curve.rows]
    w.add(name, csv_bytes(header, rows))
    return {"0": cfg.trials}, {"E": E, "ratio_spread": curve.ratio_spread()}


def _run_msa_scan(cfg, Z, marginal, U, threads, w: _Writer) -> tuple[dict, dict]:
    N, K = cfg.option("N"), cfg.option("scales")
    E = cfg.option("E") or (_default_energy(cfg, N),)
    name, header = SCHEMAS["msa-scan"]
    if cfg.trials == 0:
        w.add(name, csv_bytes(header, []))
        return {str(k): 0 for k in range(K + 1)}, {}
    center = _center(cfg, Z, N)
    ests, rows, counts = [], [], {}
    for k in range(K + 1):
        est = mc_estimate_scale(Z, cfg.params, N, k, E, cfg.trials, cfg.seed, center=center,
                                marginal=marginal, U=U, include_S=cfg.option("include_S"),
                                threads=threads, min_trials=cfg.option("min_trials"))
        ests.append(est)
        counts[str(k)] = est.P_hat.trials
        for label, e in (("P", est.P_hat), ("Q", est.Q_hat), ("S", est.S_hat)):
            if e is not None:
                rows.append((k, est.L_k, label, e.value, e.stderr, est.target, e.trials))
    w.add(name, csv_bytes(header, rows))
    rec = []
    for a, b in zip(ests[:-1], ests[1:]):
        rep = verify_recursion(a, b, cfg.params, N)
        rec.append(dataclasses.asdict(rep) | {"k": a.k})
    return counts, {"recursion": rec}


def _run_spectral(cfg, Z, marginal, U, threads, w: _Writer) -> tuple[dict, dict]:
    N, L = cfg.option("N"), cfg.option("L")
    a, b = cfg.option("a"), cfg.option("b")
    mid = N * (2.0 * cfg.d + 0.5 * cfg.params.g)
    I = cfg.option("I") or (mid - 0.5, mid + 0.5)
    name, header = SCHEMAS["spectral-reduce"]
    res = cover_trials(Z, _center(cfg, Z, N), L, cfg.params.g, a, b, I, cfg.trials, cfg.seed,
                       marginal, U, cfg.option("shifts") or (), threads)
    rows = [(i, t.count, t.total_length, t.K, t.event_B, t.shift_drift)
            for i, t in enumerate(res)]
    w.add(name, csv_bytes(header, rows))
    summ = {"I": I, "event_B": float(np.mean([t.event_B for t in res])) if res else 0.0}
    return {"0": len(res)}, summ


def pair_family(Z: Graph, lo: int, hi: int, rmin: int, rmax: int, orbit: bool,
                N: int = 2) -> list:
    """All translates of x = (a, a+1), y = (a+r, a+r+1) inside lo..hi, for r in
    rmin..rmax, optionally followed by the orbit pair ((0,1), (1,0)).
    With N = 1 the pairs are single sites (a,), (a+r,) and there is no orbit pair."""
    pairs = []
    w = 1 if N == 2 else 0
    for r in range(rmin, rmax + 1):
        for a in range(lo, hi - r - w + 1):
            x = tuple(Z.index(a + j) for j in range(N))
            y = tuple(Z.index(a + r + j) for j in range(N))
            pairs.append((x, y))
    if orbit and N == 2:
        pairs.append(((Z.index(0), Z.index(1)), (Z.index(1), Z.index(0))))
    return pairs


def read_pairs(Z: Graph, path) -> list:
    """Pairs file: one pair per line, two configuration literals, e.g. ``(0,1) (5,6)``."""
    pairs = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#")[0].strip()
        if not line:
            continue
        cut = line.index(")") + 1
        x, y = parse_config_literal(line[:cut]), parse_config_literal(line[cut:])
        pairs.append((tuple(Z.index(v) for v in x), tuple(Z.index(v) for v in y)))
    return pairs


def correlator_domain(cfg: ExperimentConfig, Z: Graph) -> np.ndarray:
    lo, hi = cfg.option("lo"), cfg.option("hi")
    if cfg.option("N") == 1:
        return np.array([[Z.index(a)] for a in range(lo, hi + 1)], dtype=np.int64)
    return strip_domain(Z, lo, hi, cfg.option("dmin"), cfg.option("dmax"))


def pooled_curve(table: CorrelatorTable, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Mean correlator per distance, pooling every pair at that distance."""
    d = table.distances(kind)
    S = table.samples
    ds = np.unique(d)
    return ds, np.array([S[:, d == r].mean() for r in ds])


def _run_correlator(cfg, Z, marginal, U, threads, w: _Writer) -> tuple[dict, dict]:
    from .localization_analysis import fit_exponential, fit_subexponential
    pf = cfg.option("pairs_file")
    pairs = read_pairs(Z, pf) if pf else pair_family(
        Z, cfg.option("lo"), cfg.option("hi"), cfg.option("rmin"), cfg.option("rmax"),
        cfg.option("orbit"), cfg.option("N"))
    configs = correlator_domain(cfg, Z)
    sector = None if cfg.option("sector") == "none" else cfg.option("sector")
    name, header = SCHEMAS["correlator"]
    if cfg.trials == 0:
        w.add(name, csv_bytes(header, []))
        w.add("correlator_fit.json", b"{}\n")
        return {"0": 0}, {}
    table = correlator_decay_experiment(Z, configs, cfg.params.g, pairs, cfg.option("I"),
                                        cfg.trials, cfg.seed, marginal, U,
                                        refine=cfg.option("refine"), sector=sector,
                                        threads=threads)
    lab = lambda x: format_config_literal(config_labels(Z, x))
    rows = [(lab(r.x), lab(r.y), r.rho, r.rho_sym, r.mean, r.stderr, r.trials)
            for r in table.rows]
    w.add(name, csv_bytes(header, rows))
    kind = "rho" if cfg.option("distance") == "rho" else "rho_sym"
    floor = cfg.option("floor")
    keep = table.distances("rho_sym") > 0
    sub = CorrelatorTable(tuple(r for r, k in zip(table.rows, keep) if k), table.samples[:, keep])
    ds, means = pooled_curve(sub, kind)
    fits = {}
    models = ("exp", "subexp") if cfg.option("fit") == "both" else (cfg.option("fit"),)
    for mdl in models:
        fn = fit_exponential if mdl == "exp" else fit_subexponential
        f = fn(ds, means, kind, floor)
        fits[mdl] = {"params": f.params, "residual": f.residual, "n_points": f.n_points,
                     "decays": f.decays}
    orbit = [r.mean for r in table.rows if r.rho_sym == 0]
    summary = {"distance": kind, "floor": floor, "fits": fits,
               "curve": {"distance": ds.tolist(), "mean": means.tolist()},
               "monotone": sub.monotone_decreasing(kind) if len(sub.rows) else None,
               "orbit_means": orbit}
    w.add("correlator_fit.json", (json.dumps(_json_clean(summary), indent=2, sort_keys=True)
                                  + "\n").encode())
    return {"0": cfg.trials}, summary


def lemma_harness(lemma: str, N: int, g: float, params: MsaParams, marginal, U,
                  threads: int = 1):
    """``harness(scale, trials, seed)`` for one lemma."""
    if lemma == "nr-nt-ns":
        return lambda s, n, sd: lemma_nr_nt_ns_run(N, s, g, n, sd, params, marginal, U, threads)
    if lemma == "pitrons":
        return lambda s, n, sd: pitrons_run(s, g, n, sd, params, marginal, U, threads)
    if lemma == "bessel":
        return lambda s, n, sd: bessel_run(N, s, g, n, sd, params, marginal, U, threads)
    raise ConfigError(f"unknown lemma {lemma!r}")


def _run_lemmas(cfg, Z, marginal, U, threads, w: _Writer) -> tuple[dict, dict]:
    N = cfg.option("N")
    rows, counts, summ = [], {}, {}
    violations = 0
    for lemma in cfg.option("lemmas"):
        harness = lemma_harness(lemma, N, cfg.params.g, cfg.params, marginal, U, threads)
        scale = cfg.option("scale")
        cands = cfg.option("calibrate")
        cal = None
        if cands:
            cal = calibrate_lemma_floor(harness, cands, cfg.option("pilot"), cfg.seed)
            if cal.floor is None:
                summ[lemma] = {"calibration": cal.pilots, "floor": None}
                continue
            scale = cal.floor
        res = harness(scale, cfg.trials, cfg.seed) if cfg.trials else None
        findings = res.findings if res else ()
        for i, f in enumerate(findings):
            rows.append((lemma, scale, i, f.hypothesis,
                         "" if f.conclusion is None else bool(f.conclusion), f.counterexample))
        ce = sum(f.counterexample for f in findings)
        if cfg.option("enforce"):
            violations += ce
        counts[f"{lemma}@{scale}"] = len(findings)
        summ[lemma] = {"scale": scale, "hypothesis_true": sum(f.hypothesis for f in findings),
                       "counterexamples": ce,
                       "calibration": cal.pilots if cal else None,
                       "floor": cal.floor if cal else None}
    name, header = SCHEMAS["verify-lemmas"]
    w.add(name, csv_bytes(header, rows))
    summ["hard_violations"] = violations
    return counts, summ


_RUNNERS = {"wegner": _run_wegner, "msa-scan": _run_msa_scan, "spectral-reduce": _run_spectral,
            "correlator": _run_correlator, "verify-lemmas": _run_lemmas}


def run(cfg: ExperimentConfig, threads: int = 1, out: str | os.PathLike | None = None
        ) -> RunManifest:
    """Validate, execute, write outputs and ``manifest.json``; returns the manifest.

    Nothing is left on disk when the run fails.
    """
    cfg.validate()
    out = Path(cfg.out if out is None else out)
    started = _utc()
    Z = cfg.make_graph()
    marginal, U = cfg.make_marginal(), cfg.make_interaction()
    writer = _Writer(out)
    counts, summary = _RUNNERS[cfg.kind](cfg, Z, marginal, U, threads, writer)
    digests = writer.flush()
    man = RunManifest(config=cfg.to_text(), version=__version__, started=started,
                      finished=_utc(), trial_counts=counts, outputs=digests,
                      summary=_json_clean(summary))
    try:
        (out / "manifest.json").write_text(man.to_json() + "\n")
    except BaseException:
        for name in digests:
            (out / name).unlink(missing_ok=True)
        raise
    return man


# --- self-check suite -----------------------------------------------------------------

@dataclass(frozen=True)
class SuiteRow:
    name: str
    samples: int
    violations: int
    hard: bool
    detail: str = ""
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.violations == 0 or not self.hard


@dataclass(frozen=True)
class SuiteReport:
    level: str
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def hard_violations(self) -> int:
        return sum(r.violations for r in self.rows if r.hard)

    def text(self) -> str:
        lines = [f"{'check':<22}{'samples':>8}{'viol':>6}  {'time':>7}  detail"]
        for r in self.rows:
            lines.append(f"{r.name:<22}{r.samples:>8}{r.violations:>6}  {r.seconds:>6.1f}s  "
                         f"{r.detail}")
        lines.append(f"{self.level}: {'PASS' if self.passed else 'FAIL'} "
                     f"({self.hard_violations} hard violations)")
        return "\n".join(lines)


def _timed(fn, *args) -> SuiteRow:
    t = time.perf_counter()
    row = fn(*args)
    return dataclasses.replace(row, seconds=time.perf_counter() - t)


def gri_instances(n: int, seed: int, tol: float = 1e-10):
    """Random resolvent-identity instances over d in {1, 2}, N in {1, 2}, both
    inner Laplacians; yields (GriReport, description) for each accepted instance."""
    rng = rng_for(derive_seed(seed, "gri-suite"))
    graphs = {(1, 1): build_lattice_segment(1, 8), (2, 1): build_lattice_segment(2, 3),
              (1, 2): configuration_graph(build_lattice_segment(1, 4), 2),
              (2, 2): configuration_graph(build_lattice_segment(2, 1), 2)}
    done = 0
    while done < n:
        d, N = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        G = graphs[(d, N)]
        kind = (LaplacianKind.DIRICHLET, LaplacianKind.NEUMANN)[int(rng.integers(0, 2))]
        c = int(rng.integers(0, G.n))
        L = int(rng.integers(1, 7))
        Lam = G.ball(c, L)
        if Lam.size == G.n:
            continue
        outside = np.setdiff1d(np.arange(G.n), Lam)
        x, y = int(rng.choice(Lam)), int(rng.choice(outside))
        pot = rng.uniform(0.0, 10.0, G.n)
        E = float(rng.uniform(-1.0, 20.0))
        try:
            rep = verify_gri(G, pot, Lam, E, x, y, kind)
        except ResonanceError:
            continue
        done += 1
        yield rep, (d, N, L, kind.value)


def _suite_gri(n, seed) -> SuiteRow:
    worst, bad = 0.0, 0
    for rep, _ in gri_instances(n, seed):
        worst = max(worst, rep.relative)
        bad += rep.relative > 1e-10 or not rep.inequality_holds
    return SuiteRow("gri", n, bad, True, f"worst relative residual {worst:.1e}")


def _random_ball_hamiltonian(rng, seed_key, i, g=None):
    Z = build_lattice_segment(1, 12)
    N = int(rng.integers(1, 3))
    L = int(rng.integers(1, 5))
    c = tuple(Z.index(int(v)) for v in rng.integers(-3, 4, N))
    ball = MpBall(Z, c, L)
    V = sample_potential(Uniform(), ball.support, derive_seed(seed_key, i))
    g = float(rng.uniform(0.5, 20.0)) if g is None else g
    return assemble(ball, Z, g, V, Interaction(1, (1.0, 0.5))), rng


def rational_instances(n: int, seed: int):
    """(solve-based value, eigen-based value, kappa mass, ball size) per instance."""
    rng = rng_for(derive_seed(seed, "rational-suite"))
    out = []
    i = 0
    while len(out) < n:
        H, _ = _random_ball_hamiltonian(rng, derive_seed(seed, "rational-V"), i)
        i += 1
        x, y = (int(v) for v in rng.integers(0, H.dim, 2))
        E = float(rng.uniform(H.spectrum[0] - 1, H.spectrum[-1] + 1))
        try:
            ge = green(H, E, x, y)
        except ResonanceError:
            continue
        out.append((ge.value, ge.rational_value(), ge.kappa_mass, H.dim))
    return out


def _suite_rational(n, seed) -> SuiteRow:
    bad, worst = 0, 0.0
    for v, r, mass, size in rational_instances(n, seed):
        err = abs(v - r) / max(1.0, abs(v))
        worst = max(worst, err)
        bad += err > 1e-8 or mass > size * (1 + 1e-12)
    return SuiteRow("rational", n, bad, True, f"worst relative gap {worst:.1e}")


@dataclass(frozen=True)
class ShiftInstance:
    drift: float            # largest endpoint drift over the shift grid
    count: int              # merged intervals in the unshifted cover
    raw_count: int          # monotone pieces before merging
    K: int
    full: bool              # the cover is the whole window


def shift_instances(n: int, seed: int, t_grid=(0.1, -0.1, 1.0, -1.0), a: float = 0.05):
    rng = rng_for(derive_seed(seed, "shift-suite"))
    out = []
    for i in range(n):
        H, _ = _random_ball_hamiltonian(rng, derive_seed(seed, "shift-V"), i)
        # unit window around a random eigenvalue
        lam = float(H.spectrum[rng.integers(H.spectrum.size)])
        lo = lam - float(rng.uniform(0.0, 1.0))
        I = (lo, lo + 1.0)
        cov = cover_for(H, a, I)
        out.append(ShiftInstance(shift_covariance_check(H, t_grid, a, I), cov.count,
                                 cov.raw_count, cov.K, cov.full))
    return out


def _suite_shift(n, seed) -> SuiteRow:
    res = shift_instances(n, seed)
    drifts = [r.drift for r in res]
    bad = sum(r.drift > 1e-9 or r.raw_count >= 3 * r.K ** 2 for r in res)
    return SuiteRow("shift-covariance", n, bad, True, f"worst drift {max(drifts):.1e}")


def tensor_instances(n: int, seed: int):
    Z = build_lattice_segment(1, 60)
    U = Interaction(1, (1.0, 0.5))
    rng = rng_for(derive_seed(seed, "tensor-suite"))
    out = []
    i = 0
    while len(out) < n:
        L = int(rng.integers(1, 4))
        a = int(rng.integers(-3, 4))
        gap = int(rng.integers(4 * L + 1, 4 * L + 7))
        ball = MpBall(Z, (Z.index(a), Z.index(a + gap)), L)
        dec = canonical_decomposition(Z, ball.center, L)
        V = sample_potential(Uniform(), ball.support, derive_seed(seed, "tensor-V", i))
        i += 1
        H = assemble(ball, Z, float(rng.uniform(1, 50)), V, U)
        E = float(rng.uniform(H.spectrum[0], H.spectrum[-1]))
        try:
            out.append(pitrons_tensor_check(H, dec, E, V, U))
        except ResonanceError:
            continue
    return out


def _suite_tensor(n, seed) -> SuiteRow:
    reps = tensor_instances(n, seed)
    bad = sum(r.worst_resolvent > 1e-8 or r.spectrum_residual > 1e-9 for r in reps)
    w = max(r.worst_resolvent for r in reps)
    return SuiteRow("tensor", n, bad, True, f"worst resolvent residual {w:.1e}")


def subharmonic_instances(n: int, seed: int, g: float = 50.0, L: int = 12, ell: int = 3,
                          params: MsaParams | None = None):
    """Green-function subharmonicity findings on a line of 41 sites."""
    params = params or MsaParams()
    G = build_lattice_segment(1, 20)
    rng = rng_for(derive_seed(seed, "subharmonic-suite"))
    out = []
    for i in range(n):
        pot = g * rng.uniform(0, 1, G.n)
        E = float(rng.uniform(0, g))
        try:
            out.append(green_subharmonicity_certificate(G, pot, G.index(0), L, ell, E,
                                                        params.m, params))
        except ResonanceError:
            continue
    return out


def _suite_subharmonic(n, seed) -> SuiteRow:
    res = subharmonic_instances(n, seed)
    cert = sum(r.hypothesis for r in res)
    bad = sum(r.counterexample for r in res)
    return SuiteRow("subharmonic", len(res), bad, True, f"{cert} certified")


# harness parameter pack: strong disorder at which the calibrated floors sit
HARNESS_G = 1000.0


def _suite_lemma(lemma, N, scale, n, seed) -> SuiteRow:
    params = MsaParams()
    res = lemma_harness(lemma, N, HARNESS_G, params, Uniform(), Interaction(1, (1.0, 0.5)))(
        scale, n, derive_seed(seed, "suite", lemma, N))
    return SuiteRow(f"{lemma} N={N}", n, res.counterexamples, True,
                    f"{res.hypothesis_true} hypothesis-true at scale {scale}")


def _suite_wegner(n, seed) -> SuiteRow:
    Z = build_lattice_segment(1, 10)
    c = (Z.index(0), Z.index(0))
    curve = wegner_curve(Z, c, 4, 1.0, 5.0, np.logspace(-4, -2, 5), n,
                         derive_seed(seed, "suite-wegner"))
    return SuiteRow("wegner", n, 0, False, f"ratio spread {curve.ratio_spread():.2f}")


def _suite_recursion(n, seed) -> SuiteRow:
    params = MsaParams(L0=4)
    Z = build_lattice_segment(1, 30)
    c = (Z.index(0), Z.index(0))
    e0 = mc_estimate_scale(Z, params, 2, 0, 100.0, n, derive_seed(seed, "suite-rec"), center=c,
                           U=Interaction(1, (1.0, 0.5)))
    e1 = mc_estimate_scale(Z, params, 2, 1, 100.0, n, derive_seed(seed, "suite-rec"), center=c,
                           U=Interaction(1, (1.0, 0.5)))
    rep = verify_recursion(e0, e1, params, 2)
    return SuiteRow("recursion", n, 0, False,
                    f"P1={rep.lhs:.3g} rhs={rep.rhs:.3g} holds={rep.holds}")


def verify_suite(level: str = "fast", seed: int = 0) -> SuiteReport:
    """Run every identity check and falsification harness; ``full`` adds the
    Wegner and recursion measurements and larger sample counts."""
    if level not in ("fast", "full"):
        raise ConfigError("level must be fast or full")
    k = 1 if level == "fast" else 5
    rows = [
        _timed(_suite_gri, 200 * k, seed),
        _timed(_suite_rational, 200 * k, seed),
        _timed(_suite_shift, 20 * k, seed),
        _timed(_suite_tensor, 20 * k, seed),
        _timed(_suite_subharmonic, 30 * k, seed),
        _timed(_suite_lemma, "nr-nt-ns", 1, 3, 100 * k, seed),
        _timed(_suite_lemma, "nr-nt-ns", 2, 3, 50 * k, seed),
        _timed(_suite_lemma, "pitrons", 2, 3, 100 * k, seed),
        _timed(_suite_lemma, "bessel", 1, 3, 100 * k, seed),
        _timed(_suite_lemma, "bessel", 2, 2, 50 * k, seed),
    ]
    if level == "full":
        rows += [_timed(_suite_wegner, 2000, seed), _timed(_suite_recursion, 100, seed)]
    return SuiteReport(level, tuple(rows))
