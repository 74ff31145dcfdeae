"""Randomized checks of two deterministic lemmas of the induction: a ball that
is non-resonant and not tunneling is non-singular, and a Bessel-type bound
on eigenfunction correlators. At small scales and moderate disorder the
first one genuinely fails, which the harness reports as counterexamples."""
import tempfile

from mpmsa.experiment import ExperimentConfig, run
from mpmsa.msa_engine import MsaParams

for g, N in ((1000.0, 1), (100.0, 2)):
    cfg = ExperimentConfig(kind="verify-lemmas", params=MsaParams(g=g), trials=30, seed=5,
                           interaction=(1.0, 0.5))
    cfg = cfg.with_options(lemmas="nr-nt-ns", N=N, scale=3, enforce=False)
    with tempfile.TemporaryDirectory() as tmp:
        man = run(cfg, out=tmp)
    s = man.summary["nr-nt-ns"]
    print(f"g={g:g} N={N}:", {k: v for k, v in s.items() if not isinstance(v, (list, dict))})
