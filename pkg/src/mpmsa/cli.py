"""Command-line entry point: ``mpmsa <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 capacity error,
4 hard-invariant violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import CapacityError, ConfigError, ConsistencyError, DomainError
from .experiment import ExperimentConfig, run, verify_suite

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_VIOLATION = 0, 2, 3, 4

# flag -> MsaParams field
PARAM_FLAGS = {"L0": "L0", "alpha": "alpha", "kappa": "kappa", "theta": "theta", "m": "m",
               "g": "g", "beta": "beta", "tau": "tau"}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI experiment config; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.add_argument("--trials", type=int)
    p.add_argument("--particles", type=int, help="number of particles N")
    p.add_argument("--g", type=float, help="disorder strength")
    p.add_argument("--marginal", choices=("uniform", "gaussian", "bernoulli"))
    p.add_argument("--interaction", help="pair potential values at distance 0..r0, comma list")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpmsa", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wegner", help="P{dist(spectrum, E) < s} against s")
    _common(p)
    p.add_argument("--L", type=int)
    p.add_argument("--E", type=float)
    p.add_argument("--s-grid", help="comma list or logspace:lo:hi:n")

    p = sub.add_parser("msa-scan", help="P, Q, S estimates along the scale sequence")
    _common(p)
    p.add_argument("--dim", type=int)
    for flag in ("L0",):
        p.add_argument(f"--{flag}", type=int)
    for flag in ("alpha", "kappa", "theta", "m", "beta", "tau"):
        p.add_argument(f"--{flag}", type=float)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--E", type=float)
    grp.add_argument("--E-grid", help="comma list of energies")
    p.add_argument("--scales", type=int, help="largest scale index k")

    p = sub.add_parser("spectral-reduce", help="singular-energy covers per sample")
    _common(p)
    p.add_argument("--L", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--interval", help="lo,hi")
    p.add_argument("--shifts", help="comma list of shifts for the covariance check")

    p = sub.add_parser("correlator", help="eigenfunction-correlator decay table and fits")
    _common(p)
    p.add_argument("--pairs", help="file with one pair of configuration literals per line")
    p.add_argument("--distance", choices=("rho", "rhos"))
    p.add_argument("--interval", help="lo,hi")
    p.add_argument("--fit", choices=("exp", "subexp", "both"))
    p.add_argument("--sector", choices=("none", "symmetric", "antisymmetric"))

    p = sub.add_parser("verify-lemmas", help="falsification harnesses for the deterministic lemmas")
    _common(p)
    p.add_argument("--lemmas", help="comma list of nr-nt-ns, pitrons, bessel")
    p.add_argument("--scale", type=int)
    p.add_argument("--calibrate", help="candidate scales for the floor calibration")
    p.add_argument("--pilot", type=int)
    p.add_argument("--no-enforce", action="store_true",
                   help="report counterexamples without a failing exit code")

    p = sub.add_parser("verify-suite", help="all identity checks and harnesses")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", help="accepted for uniformity; unused")
    p.add_argument("--out", help="write the report text here")
    return ap


def config_from_args(args) -> ExperimentConfig:
    kind = args.command
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(kind=kind)
    if cfg.kind != kind:
        raise ConfigError(f"config is for {cfg.kind!r}, not {kind!r}")
    params = {f: getattr(args, flag) for flag, f in PARAM_FLAGS.items()
              if getattr(args, flag, None) is not None}
    if getattr(args, "dim", None) is not None:
        params["d"] = args.dim
        cfg = dataclasses.replace(cfg, d=args.dim)
    if params:
        cfg = dataclasses.replace(cfg, params=dataclasses.replace(cfg.params, **params))
    top = {}
    for name in ("seed", "trials", "out", "marginal"):
        if getattr(args, name, None) is not None:
            top[name] = getattr(args, name)
    if args.interaction:
        try:
            top["interaction"] = tuple(float(t) for t in args.interaction.split(","))
        except ValueError:
            raise ConfigError(f"bad interaction {args.interaction!r}") from None
    cfg = dataclasses.replace(cfg, **top)
    opts = {}
    if args.particles is not None:
        opts["N"] = args.particles
    mapping = {"L": "L", "E": "E", "s_grid": "s_grid", "scales": "scales", "a": "a", "b": "b",
               "interval": "I", "shifts": "shifts", "pairs": "pairs_file", "distance": "distance",
               "fit": "fit", "sector": "sector", "lemmas": "lemmas", "scale": "scale",
               "calibrate": "calibrate", "pilot": "pilot"}
    for attr, key in mapping.items():
        v = getattr(args, attr, None)
        if v is not None:
            opts[key] = v
    if getattr(args, "E_grid", None) is not None:
        opts["E"] = args.E_grid
    if getattr(args, "no_enforce", False):
        opts["enforce"] = False
    if opts:
        cfg = cfg.with_options(**opts)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-suite":
            rep = verify_suite(args.level, args.seed)
            text = rep.text()
            print(text)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            return EXIT_OK if rep.passed else EXIT_VIOLATION
        cfg = config_from_args(args)
        man = run(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc} (size {exc.size}, cap {exc.cap})", file=sys.stderr)
        return EXIT_CAPACITY
    except ConsistencyError as exc:
        print(f"hard invariant violated: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"out": cfg.out, "outputs": man.outputs, "trial_counts": man.trial_counts},
                     indent=2, sort_keys=True))
    if man.hard_violations:
        print(f"{man.hard_violations} hard violations", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
