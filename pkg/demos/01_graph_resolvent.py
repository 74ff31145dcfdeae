"""Split a lattice segment into a ball and its complement and check that the
Green function of the whole segment is recovered from the ball's Green
function and the boundary edges."""
import numpy as np

from mpmsa.graph_core import (build_lattice_segment, block_operator, boundary, coupling_operator,
                              schrodinger, verify_gri)
from mpmsa.random_field import Uniform, sample_potential

G = build_lattice_segment(1, 12)
V = sample_potential(Uniform(), range(len(G.labels)), seed=4).dense(len(G.labels))
Lam = G.ball(G.index(0), 4)
print(G, "| ball of radius 4 around 0 has", Lam.size, "sites")

# the full operator is the block operator minus the boundary coupling
H = schrodinger(G, range(len(G.labels)), 3.0 * V)
gap = np.abs(H - (block_operator(G, Lam, 3.0 * V) - coupling_operator(G, Lam))).max()
print("edges across the boundary:", len(boundary(G, Lam)), " decomposition error:", gap)

x, y = G.index(1), G.index(9)
for kind in ("dirichlet", "neumann"):
    rep = verify_gri(G, 3.0 * V, Lam, E=0.37, x=x, y=y, kind=kind)
    print(f"{kind:9s} G(x,y) = {rep.lhs:+.6e}  rebuilt = {rep.rhs:+.6e}  rel. residual {rep.relative:.1e}")
