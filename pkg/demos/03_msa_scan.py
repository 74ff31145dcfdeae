"""Estimate the scale-k probabilities of the multi-scale analysis (singular
balls P_k, with the partially/fully interactive split Q_k and S_k) and check
the recursion between two consecutive scales."""
import tempfile

from mpmsa.experiment import ExperimentConfig, run
from mpmsa.msa_engine import MsaParams

cfg = ExperimentConfig(kind="msa-scan", params=MsaParams(g=30.0, L0=3), trials=40, seed=0,
                       half_width=30).with_options(N=1, scales=1, E=(15.0,))
with tempfile.TemporaryDirectory() as tmp:
    man = run(cfg, out=tmp)
    print(open(f"{tmp}/msa_scan.csv").read())
for rec in man.summary["recursion"]:
    print("recursion:", rec)
