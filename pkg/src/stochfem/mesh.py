"""Conforming triangulations of 2-D polygonal domains.

The structured square grid (:func:`generate_square_grid`) backs every
quantitative experiment; curved domains such as the cardioid come in
through :func:`import_mesh`, which reads a minimal subset of the FreeFem
``.msh`` format::

    nv nt nbe
    x y label          (nv lines)
    i j k region       (nt lines, 1-based)
    i j label          (nbe lines, 1-based)
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# boundary edge labels used by generate_square_grid
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4
EDGE_NAMES = {BOTTOM: "bottom", RIGHT: "right", TOP: "top", LEFT: "left"}


class MeshFormatError(ValueError):
    """Malformed mesh text; carries the offending line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MeshValidityError(ValueError):
    """A mesh invariant (positive area, conformity, index range) is violated."""


class PeriodicityError(ValueError):
    """A boundary node has no geometric partner on the opposite edge."""


def _signed_areas(nodes, triangles):
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 triangulation.

    Parameters
    ----------
    nodes : (nv, 2) float array
    triangles : (nt, 3) int array, 0-based, counterclockwise
    boundary_edges : (nbe, 2) int array, 0-based
    edge_labels : (nbe,) int array
    node_labels, regions : optional int arrays carried through import/export

    ``h`` (largest element diameter), ``rho`` (worst ratio of the
    barycenter-to-vertex distance to ``h``) and the element ``areas`` are
    computed on construction.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_labels: np.ndarray
    node_labels: np.ndarray | None = None
    regions: np.ndarray | None = None
    areas: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)
    rho: float = field(init=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        bedges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(self.edge_labels, dtype=np.int64).reshape(-1)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshValidityError("nodes must be an (nv, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshValidityError("triangles must be an (nt, 3) array")
        if len(labels) != len(bedges):
            raise MeshValidityError("one label per boundary edge is required")
        nv = len(nodes)
        for name, idx in (("triangle", tris), ("boundary edge", bedges)):
            bad = np.flatnonzero(((idx < 0) | (idx >= nv)).any(axis=1))
            if bad.size:
                raise MeshValidityError(
                    f"{name} {bad[0]} references a node outside 0..{nv - 1}")

        areas = _signed_areas(nodes, tris)
        scale = max(np.ptp(nodes[:, 0]), np.ptp(nodes[:, 1]), 1e-300) if nv else 1.0
        degenerate = np.flatnonzero(np.abs(areas) <= 1e-14 * scale**2)
        if degenerate.size:
            t = degenerate[0]
            raise MeshValidityError(
                f"triangle {t} {tuple(int(i) for i in tris[t])} has zero area")
        # reorient clockwise elements so every signed area is positive
        cw = areas < 0
        if cw.any():
            tris[cw] = tris[cw][:, [0, 2, 1]]
            areas = np.abs(areas)
        _check_conformity(tris)

        tris.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", bedges)
        object.__setattr__(self, "edge_labels", labels)
        object.__setattr__(self, "areas", areas)

        p = nodes[tris]                                   # (nt, 3, 2)
        diam = np.linalg.norm(p[:, [0, 1, 2]] - p[:, [1, 2, 0]], axis=2).max()
        g = p.mean(axis=1, keepdims=True)
        reach = np.linalg.norm(p - g, axis=2).max(axis=1)
        object.__setattr__(self, "h", float(diam))
        object.__setattr__(self, "rho", float(reach.max() / diam))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def area(self):
        """Total area |D|."""
        return float(self.areas.sum())

    def boundary_nodes(self):
        """Sorted indices of nodes on the topological boundary."""
        return np.unique(free_edges(self.triangles))

    def __repr__(self):
        return (f"Mesh(n_nodes={self.n_nodes}, n_triangles={self.n_triangles}, "
                f"h={self.h:.4g}, rho={self.rho:.4g})")


def _edge_keys(triangles):
    e = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    return e


def free_edges(triangles):
    """Directed edges used by exactly one triangle (the domain boundary)."""
    e = _edge_keys(np.asarray(triangles))
    und = np.sort(e, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    return e[counts[inv.reshape(-1)] == 1]


def _check_conformity(triangles):
    e = _edge_keys(triangles)
    und = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(und, axis=0, return_inverse=True,
                                  return_counts=True)
    inv = inv.reshape(-1)
    over = np.flatnonzero(counts > 2)
    if over.size:
        i, j = uniq[over[0]]
        raise MeshValidityError(f"edge ({i}, {j}) is shared by more than two triangles")
    # a shared edge must be traversed once in each direction
    fwd = (e[:, 0] < e[:, 1]).astype(np.int64)
    per_edge = np.bincount(inv, weights=fwd, minlength=len(uniq))
    bad = np.flatnonzero((counts == 2) & (per_edge != 1))
    if bad.size:
        i, j = uniq[bad[0]]
        tri = np.flatnonzero(inv == bad[0])[0] // 3
        raise MeshValidityError(
            f"triangle {tri} overlaps its neighbour across edge ({i}, {j})")


def generate_square_grid(l, N):
    """Uniform triangulation of ``[0, l]^2`` with ``2 N^2`` right triangles.

    Node ``j * (N + 1) + i`` sits at ``(i l / N, j l / N)``; every lattice
    cell is split along its lower-left to upper-right diagonal.
    """
    if not l > 0:
        raise ValueError(f"side length must be positive, got {l}")
    N = int(N)
    if N < 1:
        raise ValueError(f"need at least one subdivision, got {N}")
    s = np.linspace(0.0, l, N + 1)
    X, Y = np.meshgrid(s, s)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(N), np.arange(N))
    v00 = (j * (N + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + N + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    k = np.arange(N)
    row = lambda jj: jj * (N + 1) + k  # noqa: E731
    col = lambda ii: k * (N + 1) + ii  # noqa: E731
    edges = np.concatenate([
        np.column_stack([row(0), row(0) + 1]),                    # bottom
        np.column_stack([col(N), col(N) + N + 1]),                # right
        np.column_stack([row(N) + 1, row(N)])[::-1],              # top
        np.column_stack([col(0) + N + 1, col(0)])[::-1],          # left
    ])
    labels = np.repeat([BOTTOM, RIGHT, TOP, LEFT], N)

    node_labels = np.zeros(len(nodes), dtype=np.int64)
    for lab, sel in ((BOTTOM, row(0)), (RIGHT, col(N)), (TOP, row(N)), (LEFT, col(0))):
        node_labels[sel] = lab
    node_labels[[row(N)[-1] + 1]] = TOP
    return Mesh(nodes, triangles, edges, labels, node_labels=node_labels,
                regions=np.zeros(len(triangles), dtype=np.int64))


def barycenters(mesh):
    """Centres of gravity ``g_T``, one row per triangle."""
    return mesh.nodes[mesh.triangles].mean(axis=1)


def check_regularity(mesh, rho):
    """Check ``T`` is inside ``B(g_T, rho h)`` for every triangle.

    Returns ``(ok, worst)`` where ``worst`` is the index of the triangle
    with the largest vertex-to-barycenter distance.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    p = mesh.nodes[mesh.triangles]
    reach = np.linalg.norm(p - p.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    worst = int(np.argmax(reach))
    return bool(reach[worst] <= rho * mesh.h), worst


# ---------------------------------------------------------------- file format

def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, encoding="ascii")
    return source


def import_mesh(source):
    """Read a mesh from a path or text stream in the FreeFem subset format."""
    stream = _open_text(source)
    try:
        lines = [(n, ln.split()) for n, ln in enumerate(stream, start=1)]
    finally:
        if stream is not source:
            stream.close()
    lines = [(n, tok) for n, tok in lines if tok]
    if not lines:
        raise MeshFormatError("empty mesh file", 1)

    def ints(n, tok, count):
        if len(tok) < count:
            raise MeshFormatError(f"expected {count} integers, got {len(tok)}", n)
        try:
            return [int(t) for t in tok[:count]]
        except ValueError as exc:
            raise MeshFormatError(f"bad integer ({exc})", n) from None

    n0, head = lines[0]
    nv, nt, nbe = ints(n0, head, 3)
    if min(nv, nt, nbe) < 0:
        raise MeshFormatError("negative counts in header", n0)
    if len(lines) < 1 + nv + nt + nbe:
        last = lines[-1][0]
        raise MeshFormatError(
            f"file ends early: header announces {nv + nt + nbe} records, "
            f"found {len(lines) - 1}", last + 1)

    nodes = np.empty((nv, 2))
    node_labels = np.empty(nv, dtype=np.int64)
    for r, (n, tok) in enumerate(lines[1:1 + nv]):
        if len(tok) < 3:
            raise MeshFormatError("vertex record needs 'x y label'", n)
        try:
            nodes[r] = float(tok[0]), float(tok[1])
        except ValueError as exc:
            raise MeshFormatError(f"bad coordinate ({exc})", n) from None
        node_labels[r] = ints(n, tok[2:], 1)[0]

    tris = np.empty((nt, 3), dtype=np.int64)
    regions = np.empty(nt, dtype=np.int64)
    for r, (n, tok) in enumerate(lines[1 + nv:1 + nv + nt]):
        vals = ints(n, tok, 4)
        if not all(1 <= v <= nv for v in vals[:3]):
            raise MeshFormatError(f"vertex index out of range 1..{nv}", n)
        tris[r] = vals[:3]
        regions[r] = vals[3]

    edges = np.empty((nbe, 2), dtype=np.int64)
    labels = np.empty(nbe, dtype=np.int64)
    for r, (n, tok) in enumerate(lines[1 + nv + nt:1 + nv + nt + nbe]):
        vals = ints(n, tok, 3)
        if not all(1 <= v <= nv for v in vals[:2]):
            raise MeshFormatError(f"vertex index out of range 1..{nv}", n)
        edges[r] = vals[:2]
        labels[r] = vals[2]

    return Mesh(nodes, tris - 1, edges - 1, labels,
                node_labels=node_labels, regions=regions)


def export_mesh(mesh, target=None):
    """Write ``mesh`` in the import format; returns the text if no target."""
    out = io.StringIO()
    out.write(f"{mesh.n_nodes} {mesh.n_triangles} {len(mesh.boundary_edges)}\n")
    nl = mesh.node_labels if mesh.node_labels is not None else np.zeros(mesh.n_nodes, int)
    reg = mesh.regions if mesh.regions is not None else np.zeros(mesh.n_triangles, int)
    for (x, y), lab in zip(mesh.nodes, nl):
        out.write(f"{x:.17g} {y:.17g} {lab}\n")
    for (i, j, k), r in zip(mesh.triangles + 1, reg):
        out.write(f"{i} {j} {k} {r}\n")
    for (i, j), lab in zip(mesh.boundary_edges + 1, mesh.edge_labels):
        out.write(f"{i} {j} {lab}\n")
    text = out.getvalue()
    if target is None:
        return text
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="ascii")
    else:
        target.write(text)
    return None


# ------------------------------------------------------------ periodic square

@dataclass(frozen=True)
class PeriodicMap:
    """Identification of opposite edges of a square.

    ``master[i]`` is the node that carries the value of node ``i`` (itself
    for non-slave nodes); ``pairs`` holds only the slave entries.
    """

    master: np.ndarray
    l: float

    @property
    def pairs(self):
        idx = np.flatnonzero(self.master != np.arange(len(self.master)))
        return dict(zip(idx.tolist(), self.master[idx].tolist()))

    @property
    def reduced_dof_count(self):
        return int(np.count_nonzero(self.master == np.arange(len(self.master))))

    def lookup(self, nodes):
        return self.master[nodes]


def periodic_node_map(mesh, l):
    """Map right->left, top->bottom and the three far corners onto the origin.

    Raises :class:`PeriodicityError` if a node on any edge of ``[0, l]^2``
    lacks a partner on the opposite edge within ``1e-9 l``.
    """
    tol = 1e-9 * l
    xy = mesh.nodes
    on_lo = np.abs(xy) <= tol
    on_hi = np.abs(xy - l) <= tol

    # quantise coordinates so partners hash to the same key
    key = lambda p: (round(p[0] / tol), round(p[1] / tol))  # noqa: E731
    index = {}
    for n in np.flatnonzero((on_lo | on_hi).any(axis=1)):
        index[key(xy[n])] = n

    def find(p):
        k = key(p)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                n = index.get((k[0] + dx, k[1] + dy))
                if n is not None and np.all(np.abs(xy[n] - p) <= tol):
                    return n
        return None

    master = np.arange(mesh.n_nodes)
    for n in np.flatnonzero((on_lo | on_hi).any(axis=1)):
        for ax in (0, 1):
            if on_lo[n, ax] or on_hi[n, ax]:
                p = xy[n].copy()
                p[ax] = l if on_lo[n, ax] else 0.0
                if find(p) is None:
                    raise PeriodicityError(
                        f"boundary node {n} at ({xy[n, 0]:.6g}, {xy[n, 1]:.6g}) "
                        f"has no partner across axis {ax}")
        if on_hi[n].any():
            target = np.where(on_hi[n], 0.0, xy[n])
            master[n] = find(target)
    return PeriodicMap(master=master, l=float(l))
