"""Eigenfunction correlators of a two-particle system in the symmetric sector,
averaged over disorder and fitted against the symmetrized distance. The
orbit pair (x and its swap) keeps a correlator of order one."""
import json
import tempfile

from mpmsa.experiment import ExperimentConfig, run
from mpmsa.msa_engine import MsaParams

cfg = ExperimentConfig(kind="correlator", params=MsaParams(g=50.0), trials=20, seed=7,
                       half_width=20, interaction=(1.0, 0.5))
cfg = cfg.with_options(N=2, lo=-8, hi=8, rmin=2, rmax=10, I=(-1.0, 250.0), floor=1)
with tempfile.TemporaryDirectory() as tmp:
    run(cfg, out=tmp)
    fit = json.load(open(f"{tmp}/correlator_fit.json"))
print("orbit-pair mean:", fit["orbit_means"])
for name, f in fit["fits"].items():
    print(name, {k: v for k, v in f.items() if not isinstance(v, list)})
