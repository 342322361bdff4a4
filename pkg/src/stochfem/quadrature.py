"""Quadrature rules on the reference triangle and on intervals."""
import numpy as np


def triangle_rule(degree):
    """Barycentric points (q, 3) and weights (q,) summing to one.

    ``degree=2`` is the symmetric 3-point rule, ``degree=5`` the 7-point
    Radon rule.
    """
    if degree <= 2:
        a, b = 2.0 / 3.0, 1.0 / 6.0
        bary = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return bary, np.full(3, 1.0 / 3.0)
    if degree <= 5:
        r15 = np.sqrt(15.0)
        a1 = (6.0 - r15) / 21.0
        a2 = (6.0 + r15) / 21.0
        w1 = (155.0 - r15) / 1200.0
        w2 = (155.0 + r15) / 1200.0
        bary = np.array([
            [1 / 3, 1 / 3, 1 / 3],
            [1 - 2 * a1, a1, a1], [a1, 1 - 2 * a1, a1], [a1, a1, 1 - 2 * a1],
            [1 - 2 * a2, a2, a2], [a2, 1 - 2 * a2, a2], [a2, a2, 1 - 2 * a2],
        ])
        w = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
        return bary, w
    raise ValueError(f"no triangle rule of degree {degree}")


def mesh_quadrature(mesh, degree=5):
    """Physical quadrature points (nt, q, 2) and weights (nt, q) for ``mesh``."""
    bary, w = triangle_rule(degree)
    pts = np.einsum("qa,tad->tqd", bary, mesh.nodes[mesh.triangles])
    return pts, mesh.areas[:, None] * w[None, :]


def composite_gauss_legendre(a, b, panels, order=8):
    """Nodes and weights of ``panels`` equal Gauss-Legendre panels on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
