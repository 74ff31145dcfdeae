"""Probability that a random two-particle box has an eigenvalue within s of a
fixed energy. With a Hölder marginal it is linear in s; a Bernoulli potential
breaks that."""
from mpmsa.graph_core import build_lattice_segment
from mpmsa.hamiltonian import Interaction
from mpmsa.msa_engine import wegner_curve
from mpmsa.random_field import Bernoulli, Uniform

Z = build_lattice_segment(1, 20)
U = Interaction(1, (1.0, 0.5))
s_grid = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2]
for marginal in (Uniform(), Bernoulli()):
    curve = wegner_curve(Z, (0, 3), L=3, g=1.0, E=5.0, s_grid=s_grid, trials=3000, seed=1,
                         marginal=marginal, U=U)
    print(type(marginal).__name__)
    for row, ratio in zip(curve.rows, curve.ratio()):
        print(f"  s={row.s:7.0e}  P={row.p:.4f}  P/s={ratio:8.2f}")
    print(f"  ratio spread {curve.ratio_spread():.2f}, log-log slope {curve.slope():.2f}")
