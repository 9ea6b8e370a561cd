"""
Distance to a smooth solution
=============================

While a classical solution exists, the discrete solution should stay close
to it in relative energy.  Pressureless free transport with linear
velocity a x + b has a closed form, so we can watch the relative energy
Delta(t) next to its Gronwall envelope.
"""

import math

import numpy as np

from minaccel import initial as ic
from minaccel.diagnostics import coarse_grain, default_n_cells, relative_energy
from minaccel.gas import GasLaw
from minaccel.oracle import smooth_reference
from minaccel.trajectory import march

law = GasLaw(kappa=0.0, gamma=2.0)
params = {"a": 0.5, "b": 0.1}
beta = 2 + (law.gamma - 1)
data = ic.from_reference(smooth_reference("free_transport", params, 0.0))


def delta_history(n, tau, t_end=1.0):
    traj = march(data.particles(n), law, tau, t_end)
    out = []
    for k, st in enumerate(traj.states):
        ref = smooth_reference("free_transport", params, k * tau)
        lo, hi = ref.support
        # stay off the edges of the support, where R vanishes
        window = (lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
        f = coarse_grain(st, law, default_n_cells(n))
        out.append((k * tau, relative_energy(f, ref.R, ref.W, law, window=window),
                    math.exp(beta * ref.integrated_c)))
    return np.array(out)


###############################################################################
# Delta stays at its initial value: particles follow the characteristics
# exactly, so only the sampling error of the initial data remains.

hist = delta_history(128, 0.02)
for t, d, g in hist[::10]:
    print(f"t = {t:.2f}  Delta = {d:.3e}  envelope = {g * hist[0, 1]:.3e}")

###############################################################################
# Refining shrinks Delta(0) itself.

for n, tau in ((64, 0.04), (128, 0.02), (256, 0.01)):
    print(n, "%.3e" % delta_history(n, tau)[0, 1])
