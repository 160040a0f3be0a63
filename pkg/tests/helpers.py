"""Instance generators shared by the module tests and the acceptance suite."""

import numpy as np

from perfpred.domain import Hypercube


def norm_bounded_matrix(rng, d):
    """Random ``A`` with max column and max row absolute sums both <= 1."""
    A = rng.normal(size=(d, d))
    return A / max(np.abs(A).sum(axis=0).max(), np.abs(A).sum(axis=1).max())


def planted_affine_vi(rng, d):
    """``(A, b, x_star)`` where ``x_star`` solves the VI for ``Ax + b`` on ``[0,1]^d``.

    Some coordinates of ``x_star`` sit on the faces of the cube with ``F``
    pointing into the normal cone there.
    """
    A = norm_bounded_matrix(rng, d)
    kind = rng.integers(0, 3, d)  # 0 lower face, 1 upper face, 2 interior
    x = np.where(kind == 0, 0.0, np.where(kind == 1, 1.0, rng.uniform(0.1, 0.9, d)))
    v = np.where(kind == 0, rng.uniform(0, 0.5, d), np.where(kind == 1, -rng.uniform(0, 0.5, d), 0))
    return A, v - A @ x, x


def cube_points_near(rng, x, scale, n):
    dom = Hypercube.unit(x.size)
    return np.array([dom.project(x + scale * rng.normal(size=x.size)) for _ in range(n)])


def orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.normal(size=(d, d)))
    return Q * np.sign(np.diag(R))
