"""Second moment of the stochastic heat equation against its series.

Runs the Monte Carlo estimate on the desk-scale square and prints the
analytic curve, the estimate and the allowed band at a few times.  Pass
``large`` to use the full-size square (several minutes).

    python3 demos/heat_variance.py [large]
"""
import sys

import numpy as np

from stochfem.heat import GammaSeries, LinearSchemeConfig, monte_carlo_gamma
from stochfem.noise import GaussianKernel

l, N = (80.0, 50) if sys.argv[1:] == ["large"] else (20.0, 25)
dt, sigma = 0.05, 0.15
kernel = GaussianKernel(2.0)
cfg = LinearSchemeConfig(sigma, dt, 200, kernel, l=l, N=N, seed=0)
est = monte_carlo_gamma(cfg, 40)
series = GammaSeries(l, sigma, kernel)
gamma = series(est.times)
band = np.sqrt(dt) + est.h
print(f"l={l:g}, N={N}, h={est.h:.3f}, modes per axis {series.K_max}, band {band:.3f}")
print(f"{'t':>5} {'series':>9} {'MC':>9} {'stderr':>8}")
for k in range(0, 201, 20):
    print(f"{est.times[k]:5.1f} {gamma[k]:9.4f} {est.mean[k]:9.4f} {est.stderr[k]:8.4f}")
inside = np.abs(est.mean - gamma) <= band
print(f"inside band at {inside.mean():.1%} of times; "
      f"mean relative gap {np.mean((est.mean[1:] - gamma[1:]) / gamma[1:]):+.3f}")
