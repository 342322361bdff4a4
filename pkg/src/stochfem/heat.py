"""Stochastic heat equation on a square with homogeneous Dirichlet data.

The semi-implicit scheme

    (M / dt + A) u_{n+1} = (M / dt) u_n + (sigma / dt) (dW_n, psi_i)

is compared with the exact second moment

    Gamma_t = sigma^2 sum_{k,p} (1 - exp(-2 lam_kp t)) / (2 lam_kp) (Q e_kp, e_kp)

written in the sine basis ``e_kp = (2/l) sin(k pi x / l) sin(p pi y / l)``,
``lam_kp = (pi / l)^2 (k^2 + p^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import wofz

from .fem import DofLayout, FemOperators, load_vector
from .mesh import generate_square_grid
from .noise import (NoiseSampler, ScaledGaussianKernel, SeparableKernel,
                    loglog_slope, replica_rng)
from .quadrature import composite_gauss_legendre


@dataclass
class LinearSchemeConfig:
    sigma: float
    dt: float
    n_steps: int
    kernel: object
    l: float = 20.0
    N: int = 25
    discretization: str = "p1"
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)


def dirichlet_square(l, N):
    mesh = generate_square_grid(l, N)
    return FemOperators(mesh, DofLayout.dirichlet(mesh))


def step_linear(u, noise_load, ops, dt, sigma=1.0):
    """One step of the linear scheme.

    ``noise_load`` is ``(W_{n+1} - W_n, psi_i)`` on the reduced DOFs (or
    ``None`` for no forcing).  ``u`` may hold several replicas as columns.
    """
    solve = ops.solver(1.0 / dt, 1.0)
    rhs = ops.M @ u / dt
    if noise_load is not None and sigma != 0.0:
        rhs = rhs + (sigma / dt) * noise_load
    return solve(rhs)


# ------------------------------------------------------------ analytic Gamma

def _axis_integrals(c, l, K_max):
    """``J_k = (2/l) int_0^l int_0^l exp(-c (s-t)^2) sin(w s) sin(w t) ds dt``,
    ``w = k pi / l``, for k = 1..K_max.

    Integrating along lines of constant ``u = s - t`` reduces each double
    integral exactly to
    ``(2/l) int_0^l exp(-c u^2) ((l - u) cos(w u) + sin(w u) / w) du``.
    The Fourier integrals of the Gaussian over ``[0, l]`` have a closed form
    in the Faddeeva function, bounded for every frequency.
    """
    w = np.arange(1, K_max + 1) * np.pi / l
    a = np.sqrt(c)
    beta, X = w / (2.0 * a), a * l
    # A = int_0^l exp(-c u^2 + i w u) du
    A = (np.sqrt(np.pi) / (2.0 * a)) * (
        wofz(beta) - np.exp(-X * X + 2j * X * beta) * wofz(beta + 1j * X))
    # int_0^l u exp(-c u^2) cos(w u) du, by parts; exp(i w l) = (-1)^k
    sign = np.where(np.arange(1, K_max + 1) % 2 == 0, 1.0, -1.0)
    B_re = (1.0 - np.exp(-c * l * l) * sign) / (2.0 * c) - w / (2.0 * c) * A.imag
    return (2.0 / l) * (l * A.real - B_re + A.imag / w)


def modal_weight(kernel, k, p, l):
    """``(Q e_kp, e_kp)`` for one mode."""
    if isinstance(kernel, SeparableKernel):
        s, w = composite_gauss_legendre(0.0, l, 32)
        fk = np.sqrt(2.0 / l) * np.sin(kernel.k0 * np.pi * s / l)
        fp = np.sqrt(2.0 / l) * np.sin(kernel.p0 * np.pi * s / l)
        ek = np.sqrt(2.0 / l) * np.sin(k * np.pi * s / l)
        ep = np.sqrt(2.0 / l) * np.sin(p * np.pi * s / l)
        # f = l e_{k0 p0}; project f on e_kp axis by axis
        proj = l * np.dot(w, fk * ek) * np.dot(w, fp * ep)
        return float(proj**2)
    if isinstance(kernel, ScaledGaussianKernel):
        J = _axis_integrals(kernel.rate, l, max(k, p))
        return float(kernel.variance * J[k - 1] * J[p - 1])
    raise TypeError(f"no modal weights for {type(kernel).__name__}")


def _stationary_sum(J, l, K):
    k = np.arange(1, K + 1)
    lam = (np.pi / l) ** 2 * (k[:, None] ** 2 + k[None, :] ** 2)
    return float(np.sum(np.outer(J[:K], J[:K]) / (2.0 * lam)))


class GammaSeries:
    """Truncated series for ``Gamma_t = E ||u_t||^2``.

    With ``K_max=None`` (Gaussian kernels) the number of modes per axis
    starts at 64 and doubles, up to ``K_limit``, until the stationary value
    ``sum w / (2 lam)`` changes by less than ``rtol``.  The weights decay
    only algebraically because the kernel is cut off at the boundary of the
    square, so the truncation has to be controlled explicitly.
    """

    def __init__(self, l, sigma, kernel, K_max=None, rtol=1e-8, K_limit=4096):
        self.l = float(l)
        self.sigma = float(sigma)
        self.kernel = kernel
        if isinstance(kernel, SeparableKernel):
            K = int(K_max) if K_max is not None else max(kernel.k0, kernel.p0)
            w = np.zeros((K, K))
            if kernel.k0 <= K and kernel.p0 <= K:
                w[kernel.k0 - 1, kernel.p0 - 1] = modal_weight(kernel, kernel.k0,
                                                               kernel.p0, self.l)
        elif isinstance(kernel, ScaledGaussianKernel):
            if K_max is not None:
                K = int(K_max)
                J = _axis_integrals(kernel.rate, self.l, K)
            else:
                K = 64
                J = _axis_integrals(kernel.rate, self.l, 2 * K)
                while True:
                    coarse = _stationary_sum(J, self.l, K)
                    fine = _stationary_sum(J, self.l, 2 * K)
                    K *= 2
                    if abs(fine - coarse) <= rtol * fine or K >= K_limit:
                        break
                    J = _axis_integrals(kernel.rate, self.l, 2 * K)
                J = J[:K]
            w = kernel.variance * np.outer(J, J)
        else:
            raise TypeError(f"no modal weights for {type(kernel).__name__}")
        self.K_max = K
        k = np.arange(1, K + 1)
        self.lam = (np.pi / self.l) ** 2 * (k[:, None] ** 2 + k[None, :] ** 2)
        self.weights = np.maximum(w, 0.0)
        order = np.argsort(self.lam, axis=None, kind="stable")
        self._lam_sorted = self.lam.ravel()[order]
        self._ratio_sorted = self.weights.ravel()[order] / (2.0 * self._lam_sorted)
        # suffix sums of w / (2 lam): modes with 2 lam t > 46 are saturated
        self._tail = np.concatenate([np.cumsum(self._ratio_sorted[::-1])[::-1], [0.0]])

    def __call__(self, t):
        return gamma_analytic(self, t)


def gamma_analytic(series, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    lam, ratio, tail = series._lam_sorted, series._ratio_sorted, series._tail
    out = np.empty(t.shape)
    for idx, ti in np.ndenumerate(t):
        if ti == 0.0:
            out[idx] = 0.0
            continue
        n = int(np.searchsorted(lam, 23.0 / ti, side="right"))
        out[idx] = ratio[:n] @ -np.expm1(-2.0 * ti * lam[:n]) + tail[n]
    return series.sigma**2 * out


# ------------------------------------------------------------- Monte Carlo

@dataclass
class GammaEstimate:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    h: float


def monte_carlo_gamma(cfg: LinearSchemeConfig, P, ops=None, sampler=None):
    """``Gamma^(P)_n = mean_p ||u^{h,p}_n||^2`` over ``P`` independent runs.

    Replica ``p`` draws its noise from ``replica_rng(cfg.seed, p)``; all
    replicas are advanced together as columns of one array.
    """
    if P < 1:
        raise ValueError("need at least one replica")
    ops = ops if ops is not None else dirichlet_square(cfg.l, cfg.N)
    if sampler is None:
        sampler = NoiseSampler.build(cfg.kernel, ops.mesh, ops.layout,
                                     cfg.discretization, seed=cfg.seed)
    replicas = [sampler.spawn(p) for p in range(P)]
    F = sampler.load_factor()
    sq = np.zeros((cfg.n_steps + 1, P))
    u = np.zeros((ops.n_dofs, P))
    sqrt_dt = np.sqrt(cfg.dt)
    for n in range(1, cfg.n_steps + 1):
        if cfg.sigma != 0.0:
            g = np.column_stack([r.rng.standard_normal(sampler.n_sites) for r in replicas])
            load = sqrt_dt * (F @ g)
        else:
            load = None
        u = step_linear(u, load, ops, cfg.dt, cfg.sigma)
        sq[n] = np.einsum("ij,ij->j", u, ops.M @ u)
    se = sq.std(axis=1, ddof=1) / np.sqrt(P) if P > 1 else np.zeros(len(sq))
    return GammaEstimate(cfg.times, sq.mean(axis=1), se, ops.mesh.h)


# --------------------------------------------------------- strong error study

@dataclass
class StrongErrorRow:
    N: int
    h: float
    dt: float
    err: float
    stderr: float


@dataclass
class StrongErrorStudy:
    spatial: list
    temporal: list
    spatial_rate: float
    temporal_rate: float


def coupled_strong_error(N, dt, replicas, seed=0, sigma=1.0, k0=1, p0=1, l=1.0,
                         t_end=1.0, coupled=True, base_dt=None):
    """RMS pathwise error ``sqrt(E ||u^h_n - u_{t_n}||^2)`` at ``t_end``.

    The rank-one kernel makes the exact solution ``x_t f / l`` with ``x`` an
    Ornstein-Uhlenbeck coefficient, advanced by its exact transition from the
    same Gaussian draws that build the scheme's increments ``dbeta f(P_i)``.
    With ``coupled=False`` the exact solution uses independent draws.

    Replica ``r`` draws its Brownian path on the grid of step ``base_dt``
    (default ``dt``) from ``replica_rng(seed, r)``; coarser steps sum the
    finer increments, so levels sharing ``seed`` and ``base_dt`` see the
    same paths.  Returns ``(err, stderr, h)``.
    """
    base_dt = dt if base_dt is None else base_dt
    ratio = int(round(dt / base_dt))
    n_steps = int(round(t_end / dt))
    if ratio < 1 or not np.isclose(ratio * base_dt, dt):
        raise ValueError("dt must be a multiple of base_dt")
    if not np.isclose(n_steps * dt, t_end):
        raise ValueError("t_end must be a multiple of dt")
    ops = dirichlet_square(l, N)
    kernel = SeparableKernel(k0, p0, l)
    lam = (np.pi / l) ** 2 * (k0**2 + p0**2)
    # f = l e with e the unit mode, so W = beta f = (l beta) e
    amp = l
    f_nodes = kernel.f(ops.mesh.nodes)
    f_load = ops.layout.prolongation.T @ (ops.M_full @ f_nodes)
    e_load = load_vector(ops.mesh, lambda x, y: kernel.f(np.stack([x, y], -1)) / l,
                         ops.layout)

    def draws(offset):
        g = np.array([replica_rng(seed, offset + r).standard_normal(n_steps * ratio)
                      for r in range(replicas)])
        return g.reshape(replicas, n_steps, ratio).sum(axis=2) / np.sqrt(ratio)

    g = draws(0)
    g_ref = g if coupled else draws(replicas)
    rho = np.exp(-lam * dt)
    s = np.sqrt(-np.expm1(-2.0 * lam * dt) / (2.0 * lam))

    u = np.zeros((ops.n_dofs, replicas))
    x = np.zeros(replicas)
    for n in range(n_steps):
        dbeta = np.sqrt(dt) * g[:, n]
        u = step_linear(u, np.outer(f_load, dbeta), ops, dt, sigma)
        x = rho * x + sigma * amp * s * g_ref[:, n]
    uMu = np.einsum("ij,ij->j", u, ops.M @ u)
    sq = np.maximum(uMu - 2.0 * x * (e_load @ u) + x**2, 0.0)
    err = np.sqrt(sq.mean())
    se_sq = sq.std(ddof=1) / np.sqrt(replicas)
    return float(err), float(se_sq / (2.0 * err)), ops.mesh.h


def strong_error_study(n_space=(4, 8, 16), dts=(0.1, 0.05, 0.025), replicas=100,
                       seed=0, coupled=True, fine_dt=2.5e-4, fine_N=32, sigma=1.0,
                       k0=1, p0=1, l=1.0, t_end=1.0):
    """Spatial rate (``dt = fine_dt``, vary ``N``) and temporal rate
    (``N = fine_N``, vary ``dt``) of the coupled pathwise error.

    All levels of one sweep share their Brownian paths (common random
    numbers), which keeps the fitted slopes from being dominated by
    sampling noise.
    """
    kw = dict(sigma=sigma, k0=k0, p0=p0, l=l, t_end=t_end, coupled=coupled)
    spatial = []
    for N in n_space:
        err, se, h = coupled_strong_error(N, fine_dt, replicas, seed=seed, **kw)
        spatial.append(StrongErrorRow(N, h, fine_dt, err, se))
    temporal = []
    base = min(dts)
    for dt in dts:
        err, se, h = coupled_strong_error(fine_N, dt, replicas, seed=seed + 1,
                                          base_dt=base, **kw)
        temporal.append(StrongErrorRow(fine_N, h, dt, err, se))
    return StrongErrorStudy(
        spatial, temporal,
        loglog_slope([r.h for r in spatial], [r.err for r in spatial]),
        loglog_slope([r.dt for r in temporal], [r.err for r in temporal]))
