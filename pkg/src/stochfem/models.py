"""Semi-implicit Euler-Maruyama steppers for three excitable-media models.

Every stepper treats diffusion (and, for FitzHugh-Nagumo, the linear part
of the reaction and the recovery coupling) implicitly, the remaining
nonlinearity explicitly, and adds the noise load
``sigma / sqrt(dt) * (W~, psi_i)`` where ``W~`` is a fresh unit-time
Q-Wiener sample.  ``noise_load`` arguments are that projected vector
``(W~, psi_i)``, e.g. ``NoiseSampler.sample_load(1.0)``; pass ``None`` to
switch the noise off.

The u-system matrix never changes during a run, so each stepper asks
:meth:`FemOperators.solver` for a factorization that is built once.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp


class NumericalError(ArithmeticError):
    """Non-finite state detected; usually the explicit reaction blew up."""


class StepSizeError(ValueError):
    """Time step outside the range where the scheme is well defined."""


@dataclass(frozen=True)
class FhnParams:
    kappa: float = 1.0
    epsilon: float = 0.1
    a: float = 0.1
    sigma: float = 0.0
    # True puts the recovery variable under the 1/epsilon factor, as in the
    # continuous model; False follows the discrete scheme (default)
    v_scaled: bool = False

    def __post_init__(self):
        if not (self.kappa > 0 and self.epsilon > 0 and 0 < self.a < 1 and self.sigma >= 0):
            raise ValueError(f"invalid FitzHugh-Nagumo parameters {self}")

    def k(self, x):
        """Nonlinear part of the reaction, ``(-x^3 + (1 + a) x^2) / epsilon``."""
        return (-x**3 + (1.0 + self.a) * x**2) / self.epsilon


@dataclass(frozen=True)
class BarkleyParams:
    nu: float = 1.0
    epsilon: float = 0.05
    a: float = 0.75
    b: float = 0.01
    sigma: float = 0.0

    def __post_init__(self):
        if not (self.nu > 0 and self.epsilon > 0 and self.a > 0 and self.b > 0
                and self.sigma >= 0):
            raise ValueError(f"invalid Barkley parameters {self}")

    def reaction(self, u, v):
        return u * (1.0 - u) * (u - (v + self.b) / self.a) / self.epsilon


@dataclass(frozen=True)
class MsParams:
    nu: float = 0.03
    tau_in: float = 0.07
    tau_out: float = 0.7
    tau_open: float = 8.0
    tau_close: float = 4.0
    u_gate: float = 0.13
    sigma: float = 0.0

    def __post_init__(self):
        taus = (self.tau_in, self.tau_out, self.tau_open, self.tau_close)
        if not (self.nu > 0 and min(taus) > 0 and 0 < self.u_gate < 1
                and self.sigma >= 0):
            raise ValueError(f"invalid Mitchell-Schaeffer parameters {self}")

    def reaction(self, u, v):
        return v * u**2 * (1.0 - u) / self.tau_in - u / self.tau_out

    def gate(self, u, v):
        return np.where(u < self.u_gate, (1.0 - v) / self.tau_open, -v / self.tau_close)


@dataclass
class ModelState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must have the same shape")
        if self.t < 0:
            raise ValueError("time must be nonnegative")

    def copy(self):
        return ModelState(self.u.copy(), self.v.copy(), self.t)


def _noise_rhs(noise_load, sigma, dt):
    if noise_load is None or sigma == 0.0:
        return 0.0
    return (sigma / np.sqrt(dt)) * noise_load


def _guard(u, v, t):
    bad = ~np.isfinite(u)
    which = "u"
    if not bad.any():
        bad = ~np.isfinite(v)
        which = "v"
    if bad.any():
        node = int(np.flatnonzero(bad)[0])
        value = (u if which == "u" else v)[node]
        raise NumericalError(
            f"non-finite {which} at t={t:.6g}, dof {node} (value {value}); "
            f"reduce the time step")


def fhn_step(state, params: FhnParams, ops, noise_load, dt):
    """Advance FitzHugh-Nagumo by one step with ``v_{n+1}`` eliminated.

    Solves ``((1/dt + a/eps + c dt/(1+dt)) M + kappa A) u_{n+1}
    = M k(u_n) - c/(1+dt) M v_n + sigma/sqrt(dt) (W~, psi)`` with
    ``c = 1`` (or ``1/eps`` when ``params.v_scaled``), then
    ``v_{n+1} = (v_n + dt u_{n+1}) / (1 + dt)``.
    """
    p = params
    c = 1.0 / p.epsilon if p.v_scaled else 1.0
    alpha = 1.0 / dt + p.a / p.epsilon + c * dt / (1.0 + dt)
    solve = ops.solver(alpha, p.kappa)
    rhs = ops.M @ (p.k(state.u) + state.u / dt - c / (1.0 + dt) * state.v)
    rhs = rhs + _noise_rhs(noise_load, p.sigma, dt)
    u = solve(rhs)
    v = (state.v + dt * u) / (1.0 + dt)
    t = state.t + dt
    _guard(u, v, t)
    return ModelState(u, v, t)


def barkley_step(state, params: BarkleyParams, ops, noise_load, dt):
    """Advance Barkley: explicit reaction, implicit diffusion, implicit v."""
    p = params
    solve = ops.solver(1.0 / dt, p.nu)
    rhs = ops.M @ (state.u / dt + p.reaction(state.u, state.v))
    rhs = rhs + _noise_rhs(noise_load, p.sigma, dt)
    u = solve(rhs)
    v = (state.v + dt * u) / (1.0 + dt)
    t = state.t + dt
    _guard(u, v, t)
    return ModelState(u, v, t)


def ms_step(state, params: MsParams, ops, noise_load, dt):
    """Advance Mitchell-Schaeffer: explicit reaction and gate, implicit diffusion.

    ``dt`` may not exceed ``min(tau_open, tau_close)``, which keeps the gate
    variable inside ``[0, 1]``.
    """
    p = params
    if dt > min(p.tau_open, p.tau_close):
        raise StepSizeError(
            f"dt={dt} exceeds min(tau_open, tau_close)={min(p.tau_open, p.tau_close)}")
    solve = ops.solver(1.0 / dt, p.nu)
    rhs = ops.M @ (state.u / dt + p.reaction(state.u, state.v))
    rhs = rhs + _noise_rhs(noise_load, p.sigma, dt)
    u = solve(rhs)
    v = state.v + dt * p.gate(state.u, state.v)
    t = state.t + dt
    _guard(u, v, t)
    return ModelState(u, v, t)


STEPPERS = {"fhn": fhn_step, "barkley": barkley_step, "ms": ms_step}
PARAMS = {"fhn": FhnParams, "barkley": BarkleyParams, "ms": MsParams}


# ------------------------------------------------------------ local kinetics

def kinetics_rhs(model, params):
    """Right-hand side of the space-free ODE that each scheme discretizes."""
    if model == "fhn":
        cv = 1.0 / params.epsilon if params.v_scaled else 1.0

        def rhs(t, y):
            u, v = y
            return [u * (1 - u) * (u - params.a) / params.epsilon - cv * v, u - v]
    elif model == "barkley":
        def rhs(t, y):
            u, v = y
            return [params.reaction(u, v), u - v]
    elif model == "ms":
        def rhs(t, y):
            u, v = y
            return [params.reaction(u, v), float(params.gate(u, v))]
    else:
        raise ValueError(f"unknown model {model!r}")
    return rhs


def solve_kinetics(model, params, y0, t_eval, **kwargs):
    """High-accuracy solution of the local kinetics (no diffusion, no noise)."""
    opts = dict(method="Radau", rtol=1e-10, atol=1e-12)
    opts.update(kwargs)
    sol = solve_ivp(kinetics_rhs(model, params), (t_eval[0], t_eval[-1]), y0,
                    t_eval=t_eval, **opts)
    if not sol.success:
        raise NumericalError(sol.message)
    return sol.y


def fhn_dissipativity_check(a, samples, rng=None, low=-2.0, high=3.0):
    """Check ``(f(x) - f(y))(x - y) <= (1 + a^2 - a)/3 (x - y)^2`` on random pairs
    with ``f(x) = x (1 - x)(x - a)``."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    x = rng.uniform(low, high, samples)
    y = rng.uniform(low, high, samples)
    f = lambda s: s * (1 - s) * (s - a)  # noqa: E731
    lhs = (f(x) - f(y)) * (x - y)
    bound = (1 + a * a - a) / 3.0 * (x - y) ** 2
    # cancellation in f(x) - f(y) costs a few ulps of |f|
    slack = 1e-12 * (np.abs(f(x)) + np.abs(f(y)) + 1.0) * np.abs(x - y)
    return bool(np.all(lhs <= bound + slack))


def with_sigma(params, sigma):
    return replace(params, sigma=float(sigma))
