"""Pathwise convergence of the linear scheme with rank-one noise.

The exact solution is a single Ornstein-Uhlenbeck mode, driven by the
same Brownian increments as the scheme.  The spatial error of P1 elements
for this smooth noise falls like h^2; the time error like dt^(1/2) at
coarse steps.

    python3 demos/strong_order.py
"""
from stochfem.heat import strong_error_study

study = strong_error_study(n_space=(4, 8, 16), dts=(0.1, 0.05, 0.025), replicas=100)
for name, rows, rate in (("space", study.spatial, study.spatial_rate),
                         ("time", study.temporal, study.temporal_rate)):
    print(f"{name}: fitted rate {rate:.3f}")
    for r in rows:
        print(f"  N={r.N:<3d} h={r.h:.4f} dt={r.dt:.4g} err={r.err:.4e} +/- {r.stderr:.1e}")
