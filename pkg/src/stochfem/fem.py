"""P1 finite-element operators on a :class:`~stochfem.mesh.Mesh`.

Boundary conditions are expressed through a :class:`DofLayout`, which maps
every mesh node to a reduced degree of freedom (or to nothing, for pinned
Dirichlet nodes).  Element contributions are scattered straight into the
reduced numbering, so periodic identification happens before assembly and
every matrix stays symmetric.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, PeriodicMap

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

LAYOUT_KINDS = ("free", "dirichlet", "periodic")


@dataclass(frozen=True, eq=False)
class DofLayout:
    """Full-node to reduced-DOF numbering.

    ``full_to_reduced[i]`` is the reduced index of node ``i`` or ``-1`` if
    the node is eliminated (homogeneous Dirichlet).  ``representative[r]``
    is the lowest node index carrying reduced DOF ``r``.
    """

    kind: str
    full_to_reduced: np.ndarray
    representative: np.ndarray = field(init=False, repr=False)
    prolongation: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise ValueError(f"unknown layout kind {self.kind!r}")
        f2r = np.asarray(self.full_to_reduced, dtype=np.int64)
        keep = np.flatnonzero(f2r >= 0)
        n_red = int(f2r.max()) + 1 if keep.size else 0
        rep = np.full(n_red, -1, dtype=np.int64)
        # reversed assignment leaves the smallest node index in place
        rep[f2r[keep[::-1]]] = keep[::-1]
        P = sp.csr_matrix((np.ones(keep.size), (keep, f2r[keep])),
                          shape=(len(f2r), n_red))
        object.__setattr__(self, "full_to_reduced", f2r)
        object.__setattr__(self, "representative", rep)
        object.__setattr__(self, "prolongation", P)

    @property
    def n_full(self):
        return len(self.full_to_reduced)

    @property
    def n_dofs(self):
        return len(self.representative)

    def expand(self, u):
        """Reduced vector(s) to full nodal values (zeros on pinned nodes)."""
        return self.prolongation @ u

    def restrict(self, u_full):
        """Full nodal values to reduced DOFs (sampled at representatives)."""
        return np.asarray(u_full)[self.representative]

    @classmethod
    def free(cls, mesh):
        return cls("free", np.arange(mesh.n_nodes))

    @classmethod
    def dirichlet(cls, mesh):
        f2r = np.full(mesh.n_nodes, -1, dtype=np.int64)
        interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes())
        f2r[interior] = np.arange(interior.size)
        return cls("dirichlet", f2r)

    @classmethod
    def periodic(cls, mesh, pmap: PeriodicMap):
        masters = np.unique(pmap.master)
        renum = np.full(mesh.n_nodes, -1, dtype=np.int64)
        renum[masters] = np.arange(masters.size)
        return cls("periodic", renum[pmap.master])


def _element_gradients(mesh):
    """Constant gradients of the three barycentric basis functions."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    two_area = 2.0 * mesh.areas[:, None]
    bx = (y[:, [1, 2, 0]] - y[:, [2, 0, 1]]) / two_area
    by = (x[:, [2, 0, 1]] - x[:, [1, 2, 0]]) / two_area
    return bx, by


def _scatter(mesh, layout, local):
    """Sum (nt, 3, 3) element blocks into a reduced CSR matrix."""
    if layout is None:
        layout = DofLayout.free(mesh)
    dofs = layout.full_to_reduced[mesh.triangles]
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = layout.n_dofs
    mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def element_mass(mesh):
    return mesh.areas[:, None, None] * _MASS_REF


def element_stiffness(mesh):
    bx, by = _element_gradients(mesh)
    return mesh.areas[:, None, None] * (bx[:, :, None] * bx[:, None, :]
                                        + by[:, :, None] * by[:, None, :])


def assemble_mass(mesh: Mesh, layout: DofLayout | None = None):
    """Consistent P1 mass matrix ``M_ij = (psi_i, psi_j)``."""
    return _scatter(mesh, layout, element_mass(mesh))


def assemble_stiffness(mesh: Mesh, layout: DofLayout | None = None):
    """P1 stiffness matrix ``A_ij = (grad psi_i, grad psi_j)``."""
    return _scatter(mesh, layout, element_stiffness(mesh))


def l2_norm(vec, M):
    """Discrete L2 norm ``sqrt(v^T M v)``; column-wise for 2-D input."""
    vec = np.asarray(vec)
    quad = np.einsum("i...,i...->...", vec, M @ vec)
    return np.sqrt(np.maximum(quad, 0.0))


def nonlinear_load(values, M):
    """Load vector of the P1 interpolant of a pointwise nonlinearity.

    ``values`` are the nonlinearity already evaluated at the DOFs, so this
    is ``M @ values``; it stands in for ``(k(u_n), psi_i)``.
    """
    return M @ values


def interpolate(mesh, func, layout=None):
    """Nodal interpolant of ``func(x, y)``, restricted to ``layout``'s DOFs."""
    vals = np.asarray(func(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, (mesh.n_nodes,)).copy()
    return vals if layout is None else layout.restrict(vals)


def load_vector(mesh, func, layout=None, degree=5):
    """``(func, psi_i)`` by per-triangle Gauss quadrature (degree 2 or 5)."""
    from .quadrature import triangle_rule

    bary, w = triangle_rule(degree)
    p = mesh.nodes[mesh.triangles]                       # (nt, 3, 2)
    pts = np.einsum("qa,tad->tqd", bary, p)
    fv = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    local = np.einsum("tq,qa,q,t->ta", fv, bary, w, mesh.areas)
    full = np.bincount(mesh.triangles.ravel(), weights=local.ravel(),
                       minlength=mesh.n_nodes)
    if layout is None:
        return full
    return layout.prolongation.T @ full


class FemOperators:
    """Mass and stiffness matrices for one mesh and layout, plus cached solvers.

    ``solver(alpha, beta)`` returns a factorization of ``alpha M + beta A``
    that is computed once and reused for every later call with the same
    coefficients; it is safe to call from several threads.
    """

    def __init__(self, mesh: Mesh, layout: DofLayout | None = None):
        self.mesh = mesh
        self.layout = layout if layout is not None else DofLayout.free(mesh)
        self.M = assemble_mass(mesh, self.layout)
        self.A = assemble_stiffness(mesh, self.layout)
        self._M_full = None
        self._solvers = {}
        self._lock = threading.Lock()

    @property
    def n_dofs(self):
        return self.layout.n_dofs

    @property
    def M_full(self):
        """Mass matrix over all mesh nodes, ignoring the layout."""
        if self._M_full is None:
            self._M_full = assemble_mass(self.mesh)
        return self._M_full

    def system_matrix(self, alpha, beta):
        return (alpha * self.M + beta * self.A).tocsc()

    def solver(self, alpha, beta):
        key = (float(alpha), float(beta))
        with self._lock:
            solve = self._solvers.get(key)
            if solve is None:
                lu = spla.splu(self.system_matrix(alpha, beta),
                               permc_spec="MMD_AT_PLUS_A",
                               options={"SymmetricMode": True})
                solve = lu.solve
                self._solvers[key] = solve
        return solve

    def norm(self, u):
        return l2_norm(u, self.M)
