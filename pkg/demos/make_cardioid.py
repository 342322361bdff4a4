"""Build the heart-shaped test mesh used by the FitzHugh-Nagumo demo.

The outline is the classic heart curve, scaled to about 20 units across.
Boundary points are spaced evenly in arc length, the interior is filled
with a hexagonal lattice, and a Delaunay triangulation is clipped to the
outline.  Run from the repository root:

    python3 demos/make_cardioid.py [h]
"""
import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from stochfem.mesh import Mesh, export_mesh, free_edges


def outline(n=4000, scale=0.6):
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    x = 16 * np.sin(t) ** 3
    y = 13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t)
    return scale * np.column_stack([x, y])


def resample(curve, h):
    seg = np.linalg.norm(np.diff(np.vstack([curve, curve[:1]]), axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    m = max(int(round(s[-1] / h)), 8)
    target = np.linspace(0.0, s[-1], m, endpoint=False)
    closed = np.vstack([curve, curve[:1]])
    return np.column_stack([np.interp(target, s, closed[:, 0]),
                            np.interp(target, s, closed[:, 1])])


def inside(points, poly):
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return (crosses & (x < xi)).sum(axis=1) % 2 == 1


def distance_to(points, poly):
    a, b = poly, np.roll(poly, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None]
    t = np.clip(np.einsum("pek,ek->pe", ap, ab) / np.einsum("ek,ek->e", ab, ab), 0, 1)
    d = ap - t[..., None] * ab[None]
    return np.sqrt(np.einsum("pek,pek->pe", d, d)).min(axis=1)


def build(h=0.5):
    boundary = resample(outline(), h)
    lo, hi = boundary.min(axis=0), boundary.max(axis=0)
    ys = np.arange(lo[1], hi[1] + h, h * np.sqrt(3) / 2)
    pts = [np.column_stack([np.arange(lo[0] + (k % 2) * h / 2, hi[0] + h, h),
                            np.full(len(np.arange(lo[0] + (k % 2) * h / 2, hi[0] + h, h)),
                                    y)])
           for k, y in enumerate(ys)]
    lattice = np.vstack(pts)
    lattice = lattice[inside(lattice, boundary)]
    lattice = lattice[distance_to(lattice, boundary) > 0.6 * h]
    nodes = np.vstack([boundary, lattice])
    tri = Delaunay(nodes).simplices
    keep = inside(nodes[tri].mean(axis=1), boundary)
    tri = tri[keep]
    used = np.unique(tri)
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes, tri = nodes[used], remap[tri]
    edges = free_edges(tri)
    node_labels = np.zeros(len(nodes), dtype=np.int64)
    node_labels[np.unique(edges)] = 1
    return Mesh(nodes, tri, edges, np.ones(len(edges), dtype=np.int64),
                node_labels=node_labels, regions=np.zeros(len(tri), dtype=np.int64))


if __name__ == "__main__":
    h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
    mesh = build(h)
    out = Path(__file__).parent / "data" / "cardioid.msh"
    export_mesh(mesh, out)
    print(f"{mesh.n_nodes} nodes, {mesh.n_triangles} triangles, h={mesh.h:.3f}, "
          f"rho={mesh.rho:.3f} -> {out}")
