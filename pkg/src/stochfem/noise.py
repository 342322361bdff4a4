"""Spatially coloured Q-Wiener noise and its finite-element approximations.

Three discretizations are supported:

``"p1"``
    nodal values ``W(P_i)`` on the P1 basis;
``"p0"``
    values at the barycenters ``W(g_T)`` on element indicators;
``"p0a"``
    element averages ``(W, 1_T) / |T|`` (the L2 projection onto P0).

Every Monte Carlo replica draws from its own stream, derived from a master
seed by :func:`replica_rng`::

    np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))

which is the same stream as ``SeedSequence(seed).spawn(...)`` would hand out
for a one-level key, so replicas never share state and results do not depend
on scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import DofLayout, assemble_mass, l2_norm
from .mesh import barycenters, generate_square_grid
from .quadrature import mesh_quadrature, triangle_rule

DISCRETIZATIONS = ("p0", "p0a", "p1")
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


class NotPSDError(np.linalg.LinAlgError):
    """Covariance matrix could not be factorized at any jitter level."""


def replica_rng(seed, *key):
    """Independent generator for replica ``key`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


# ------------------------------------------------------------------- kernels

def _sqdist(X, Y):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    d = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


@dataclass(frozen=True)
class ScaledGaussianKernel:
    """Stationary kernel ``q(x, y) = (a / xi^2) exp(-(b / xi^2) |x - y|^2)``."""

    a: float
    b: float
    xi: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.xi > 0):
            raise ValueError("a, b and xi must be positive")

    @property
    def variance(self):
        """``q(x, x)``."""
        return self.a / self.xi**2

    @property
    def rate(self):
        return self.b / self.xi**2

    def profile(self, r2):
        """``C`` as a function of the squared distance."""
        return self.variance * np.exp(-self.rate * np.asarray(r2))

    def pairwise(self, X, Y=None):
        return self.profile(_sqdist(X, X if Y is None else Y))

    def __call__(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return self.profile(np.sum(d * d, axis=-1))


class GaussianKernel(ScaledGaussianKernel):
    """``q_xi(x, y) = exp(-pi |x - y|^2 / (4 xi^2)) / (4 xi^2)``."""

    def __init__(self, xi):
        super().__init__(a=0.25, b=np.pi / 4.0, xi=float(xi))

    def __repr__(self):
        return f"GaussianKernel(xi={self.xi!r})"


@dataclass(frozen=True)
class SeparableKernel:
    """Rank-one kernel ``q(x, y) = f(x) f(y)`` on ``[0, l]^2`` with
    ``f(x) = 2 sin(k0 pi x1 / l) sin(p0 pi x2 / l)``."""

    k0: int
    p0: int
    l: float = 1.0

    def f(self, X):
        X = np.asarray(X, dtype=float)
        return (2.0 * np.sin(self.k0 * np.pi * X[..., 0] / self.l)
                * np.sin(self.p0 * np.pi * X[..., 1] / self.l))

    def pairwise(self, X, Y=None):
        fx = self.f(np.asarray(X, dtype=float).reshape(-1, 2))
        fy = fx if Y is None else self.f(np.asarray(Y, dtype=float).reshape(-1, 2))
        return np.outer(fx, fy)

    def __call__(self, x, y):
        return self.f(x) * self.f(y)


def covariance_matrix(kernel, points):
    """Dense ``K_ij = q(points_i, points_j)``, symmetrized exactly."""
    K = kernel.pairwise(points)
    return 0.5 * (K + K.T)


def cholesky_psd(K, ladder=JITTER_LADDER):
    """Lower factor ``L`` with ``L L^T = K + delta I``.

    ``delta`` climbs ``ladder * max(diag K)`` until the factorization
    succeeds; returns ``(L, delta)``.
    """
    K = np.asarray(K, dtype=float)
    scale = float(np.max(np.diag(K))) if K.size else 0.0
    if scale <= 0.0:
        scale = 1.0
    eye = np.eye(len(K))
    for level in ladder:
        delta = level * scale
        try:
            return np.linalg.cholesky(K + delta * eye), delta
        except np.linalg.LinAlgError:
            continue
    raise NotPSDError(
        f"covariance is not positive semidefinite "
        f"(failed with jitter up to {ladder[-1]:g} * max diag)")


def p0a_covariance(kernel, mesh, degree=2):
    """``(Q 1_T, 1_S) / (|T| |S|)`` by a product of triangle rules."""
    bary, w = triangle_rule(degree)
    pts = np.einsum("qa,tad->tqd", bary, mesh.nodes[mesh.triangles])
    nt, nq = pts.shape[:2]
    Kq = kernel.pairwise(pts.reshape(-1, 2)).reshape(nt, nq, nt, nq)
    K = np.einsum("tasb,a,b->ts", Kq, w, w)
    return 0.5 * (K + K.T)


# --------------------------------------------------------- sites and loads

def noise_sites(mesh, layout, discretization):
    """Evaluation points for a discretization.

    P1 noise lives on the layout's representative nodes when the layout is
    periodic (one value per torus point) and on every node otherwise; P0 and
    P0a use barycenters.
    """
    disc = _check_disc(discretization)
    if disc == "p1":
        if layout is not None and layout.kind == "periodic":
            return mesh.nodes[layout.representative]
        return mesh.nodes
    return barycenters(mesh)


def noise_load_matrix(mesh, layout, discretization):
    """Sparse map from site values to ``(W, psi_i)`` over reduced DOFs."""
    disc = _check_disc(discretization)
    layout = layout if layout is not None else DofLayout.free(mesh)
    P = layout.prolongation
    if disc == "p1":
        M_full = assemble_mass(mesh)
        S = P if layout.kind == "periodic" else sp.identity(mesh.n_nodes, format="csr")
        return (P.T @ M_full @ S).tocsr()
    nt = mesh.n_triangles
    rows = mesh.triangles.ravel()
    cols = np.repeat(np.arange(nt), 3)
    vals = np.repeat(mesh.areas / 3.0, 3)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, nt))
    return (P.T @ B).tocsr()


def _check_disc(discretization):
    disc = str(discretization).lower()
    if disc not in DISCRETIZATIONS:
        raise ValueError(f"unknown noise discretization {discretization!r}")
    return disc


@dataclass(eq=False)
class NoiseSampler:
    """Gaussian increments with covariance ``dt * K`` at fixed sites.

    Build one with :meth:`build`; derive per-replica samplers that share the
    factor with :meth:`spawn`.
    """

    points: np.ndarray
    covariance_factor: np.ndarray
    discretization: str
    rng: np.random.Generator
    jitter: float = 0.0
    load_matrix: sp.csr_matrix | None = None
    seed: int | None = None
    _load_factor: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, kernel, mesh, layout=None, discretization="p1", seed=0):
        disc = _check_disc(discretization)
        pts = noise_sites(mesh, layout, disc)
        if disc == "p0a":
            K = p0a_covariance(kernel, mesh)
        else:
            K = covariance_matrix(kernel, pts)
        L, delta = cholesky_psd(K)
        return cls(points=pts, covariance_factor=L, discretization=disc,
                   rng=replica_rng(seed), jitter=delta,
                   load_matrix=noise_load_matrix(mesh, layout, disc), seed=seed)

    @property
    def n_sites(self):
        return len(self.points)

    def spawn(self, *key):
        """Sampler for replica ``key`` sharing this sampler's factor."""
        if self.seed is None:
            raise ValueError("spawn needs a sampler built from an integer seed")
        twin = NoiseSampler(self.points, self.covariance_factor, self.discretization,
                            replica_rng(self.seed, *key), self.jitter,
                            self.load_matrix, self.seed)
        twin._load_factor = self._load_factor
        return twin

    def sample_increment(self, dt):
        """Site values of ``W_{t+dt} - W_t``: ``sqrt(dt) L g``."""
        if dt < 0:
            raise ValueError("dt must be nonnegative")
        if dt == 0:
            return np.zeros(self.n_sites)
        g = self.rng.standard_normal(self.n_sites)
        return np.sqrt(dt) * (self.covariance_factor @ g)

    def load_factor(self):
        if self._load_factor is None:
            self._load_factor = np.asarray(self.load_matrix @ self.covariance_factor)
        return self._load_factor

    def sample_load(self, dt=1.0):
        """``(W_{t+dt} - W_t, psi_i)`` over reduced DOFs in one product."""
        g = self.rng.standard_normal(self.n_sites)
        return np.sqrt(dt) * (self.load_factor() @ g)


def sample_increment(sampler, dt):
    return sampler.sample_increment(dt)


def project_noise(values, discretization, mesh):
    """Finite-element coefficients of a sampled noise field.

    P1 coefficients are the nodal values; P0 and P0a coefficients are one
    value per triangle.  The sampled values already *are* the coefficients,
    so this validates the site/discretization pairing and copies.
    """
    disc = _check_disc(discretization)
    values = np.asarray(values, dtype=float)
    expected = mesh.n_nodes if disc == "p1" else mesh.n_triangles
    if values.shape[0] != expected:
        site = "nodes" if disc == "p1" else "triangles"
        raise ValueError(f"{disc} noise needs one value per {site[:-1]} "
                         f"({expected}), got {values.shape[0]}")
    return values.copy()


def evaluate_field(coeffs, discretization, mesh, bary):
    """Values of an FE field at barycentric points of every triangle.

    ``bary`` is (q, 3); returns (nt, q, ...).
    """
    disc = _check_disc(discretization)
    coeffs = np.asarray(coeffs)
    if disc == "p1":
        return np.einsum("qa,ta...->tq...", bary, coeffs[mesh.triangles])
    return np.repeat(coeffs[:, None, ...], len(bary), axis=1)


def field_norm(coeffs, discretization, mesh):
    """L2 norm of a P0/P0a/P1 field."""
    disc = _check_disc(discretization)
    if disc == "p1":
        return l2_norm(coeffs, assemble_mass(mesh))
    c = np.asarray(coeffs)
    return np.sqrt(np.einsum("t...,t...,t->...", c, c, mesh.areas))


# ------------------------------------------------------- exact separable path

@dataclass(frozen=True)
class SeparablePath:
    """``W_t = beta_t f`` for the rank-one kernel; ``beta`` is (n_paths, n_times)."""

    kernel: SeparableKernel
    times: np.ndarray
    beta: np.ndarray

    def field(self, time_index, X):
        """Exact field at ``times[time_index]`` evaluated at points ``X``.

        Returns (n_paths, *X.shape[:-1]).
        """
        fx = self.kernel.f(X)
        b = self.beta[:, time_index]
        return b.reshape((-1,) + (1,) * fx.ndim) * fx


def exact_separable_path(k0, p0, l, times, seed=0, n_paths=1):
    """Brownian coefficient ``beta`` on ``times`` times the fixed profile ``f``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must increase strictly from 0")
    rng = seed if isinstance(seed, np.random.Generator) else replica_rng(seed)
    dt = np.diff(times)
    steps = rng.standard_normal((n_paths, len(dt))) * np.sqrt(dt)
    beta = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(steps, axis=1)], axis=1)
    return SeparablePath(SeparableKernel(k0, p0, l), times, beta)


# --------------------------------------------------------- error experiments

@dataclass
class ConvergenceTable:
    """Rows of ``(N, estimate, stderr)`` plus the fitted log-log slope."""

    N: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    slope: float

    def rows(self):
        return list(zip(self.N.tolist(), self.estimate.tolist(), self.stderr.tolist()))


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x`` (nan below two points)."""
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mu_N_experiment(N_list, samples, seed=0, k0=1, p0=1, l=1.0, n_steps=20):
    """Monte Carlo estimate of ``E ||W_1 - W^{N,0}_1||^2`` for the rank-one kernel.

    For each ``N`` the exact path ``beta f`` is simulated on ``[0, 1]``, its
    P0 projection on the ``2 N^2``-triangle grid is formed from barycenter
    values, and the squared L2 distance at ``t = 1`` is integrated with the
    degree-5 triangle rule.
    """
    N_list = [int(n) for n in N_list]
    if not N_list:
        raise ValueError("N_list is empty")
    bary, _ = triangle_rule(5)
    times = np.linspace(0.0, 1.0, n_steps + 1)
    est, se = [], []
    for idx, N in enumerate(N_list):
        mesh = generate_square_grid(l, N)
        pts, w = mesh_quadrature(mesh, 5)
        path = exact_separable_path(k0, p0, l, times, seed=replica_rng(seed, idx),
                                    n_paths=samples)
        exact = path.field(-1, pts)                                    # (P, nt, q)
        site_vals = path.field(-1, barycenters(mesh))                  # (P, nt)
        coeffs = project_noise(site_vals.T, "p0", mesh)                # (nt, P)
        approx = evaluate_field(coeffs, "p0", mesh, bary)              # (nt, q, P)
        diff = exact - np.moveaxis(approx, -1, 0)
        sq = np.einsum("ptq,tq->p", diff**2, w)
        est.append(sq.mean())
        se.append(sq.std(ddof=1) / np.sqrt(samples) if samples > 1 else np.nan)
    est, se = np.array(est), np.array(se)
    return ConvergenceTable(np.array(N_list), est, se, loglog_slope(N_list, est))


def _coarse_to_fine(N, refine, l):
    """Sparse P1 interpolation from the N-grid onto the (refine N)-grid nodes."""
    Nf = refine * N
    s = np.arange(Nf + 1) / refine
    X, Y = np.meshgrid(s, s)
    fx, fy = X.ravel(), Y.ravel()
    i = np.minimum(np.floor(fx).astype(int), N - 1)
    j = np.minimum(np.floor(fy).astype(int), N - 1)
    a, b = fx - i, fy - j
    v00 = j * (N + 1) + i
    v10, v01, v11 = v00 + 1, v00 + N + 1, v00 + N + 2
    lower = a >= b
    rows = np.repeat(np.arange(fx.size), 3)
    cols = np.column_stack([v00, np.where(lower, v10, v01), v11]).ravel()
    vals = np.column_stack([np.where(lower, 1 - a, 1 - b),
                            np.where(lower, a - b, b - a),
                            np.where(lower, b, a)]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(fx.size, (N + 1) ** 2))


def p1_global_error(kernel, N_list, samples, seed=0, l=1.0, refine=4,
                    n_times=5, tau=1.0):
    """``E sup_t ||W_t - W^{h,1}_t||^2`` against a ``refine``-times finer grid.

    The noise is sampled at the fine nodes (which contain the coarse
    nodes); the coarse P1 interpolant is compared with the fine one and the
    supremum is taken over ``n_times`` equally spaced times in ``(0, tau]``.
    """
    dt = tau / n_times
    est, se = [], []
    for idx, N in enumerate(N_list):
        fine = generate_square_grid(l, refine * N)
        Mf = assemble_mass(fine)
        L, _ = cholesky_psd(covariance_matrix(kernel, fine.nodes))
        coarse_ids = (np.arange(N + 1)[:, None] * refine * (refine * N + 1)
                      + np.arange(N + 1)[None, :] * refine).ravel()
        Icf = _coarse_to_fine(N, refine, l)
        rng = replica_rng(seed, idx)
        g = rng.standard_normal((fine.n_nodes, n_times * samples))
        incr = np.sqrt(dt) * (L @ g)
        W = np.cumsum(incr.reshape(fine.n_nodes, n_times, samples), axis=1)
        W = W.reshape(fine.n_nodes, -1)
        D = W - Icf @ W[coarse_ids]
        sq = np.einsum("ij,ij->j", D, Mf @ D).reshape(n_times, samples)
        sup = sq.max(axis=0)
        est.append(sup.mean())
        se.append(sup.std(ddof=1) / np.sqrt(samples))
    est = np.array(est)
    return ConvergenceTable(np.array(N_list), est, np.array(se),
                            loglog_slope(N_list, est))
