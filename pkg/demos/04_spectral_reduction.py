"""Fixed to variable energy: the energies where a ball's Green function is large
form a finite union of intervals that moves rigidly when the potential is
shifted by a constant."""
from mpmsa.graph_core import build_lattice_segment
from mpmsa.hamiltonian import assemble
from mpmsa.mp_geometry import MpBall
from mpmsa.random_field import Uniform, sample_potential
from mpmsa.spectral_reduction import cover_for, shift_covariance_check

Z = build_lattice_segment(1, 20)
ball = MpBall(Z, (0,), 4)
H = assemble(ball, Z, 4.0, sample_potential(Uniform(), ball.support, seed=2))
print("spectrum:", H.spectrum.round(3))

I = (1.0, 2.0)
for a in (1.0, 0.1, 0.01):
    cov = cover_for(H, a, I)
    print(f"a={a:<5}  {cov.count} interval(s), total length {cov.total_length:.4f}")
    for lo, hi in cov.intervals:
        print(f"    [{lo:.5f}, {hi:.5f}]")
print("shift covariance drift:", shift_covariance_check(H, [-1.0, -0.1, 0.1, 1.0], 0.01, I))
