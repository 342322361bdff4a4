"""Projecting a rank-one Q-Wiener path onto piecewise constants.

The squared L2 error of replacing the noise by its value at each
triangle's barycenter falls like h^2, i.e. like N^-2 on an N x N grid.

    python3 demos/noise_error.py [samples]
"""
import sys

from stochfem.noise import mu_N_experiment

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 200
table = mu_N_experiment([5, 10, 20, 30, 40], samples, seed=1)
print(f"{'N':>4} {'mu_N':>12} {'stderr':>10} {'ratio':>7}")
prev = None
for N, est, se in table.rows():
    ratio = f"{prev / est:7.2f}" if prev else ""
    print(f"{N:>4} {est:12.4e} {se:10.2e} {ratio}")
    prev = est
print(f"log-log slope {table.slope:.3f} (expect -2)")
