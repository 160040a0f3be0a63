"""Convex compact constraint sets.

Every set exposes exact Euclidean projection, membership, diameter and the
support-gap functional ``max_{x' in X} <x - x', v>`` that all first-order
certificates in the package are built on.  Three shapes are supported:
axis-aligned boxes, Euclidean balls and strictly convex polygons in the
plane.  Instances are immutable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import MEMBERSHIP_TOL, check_in_domain, check_vector

# points this close to the set are treated as members by ``project`` so that
# projecting a projected point is a no-op bit for bit
_PROJECT_SNAP = 1e-12


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


class Domain:
    """Common interface; concrete shapes are the dataclasses below."""

    kind = "abstract"

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    # -- queries implemented per shape --------------------------------------
    def project(self, p):
        raise NotImplementedError

    def contains(self, p, tol=MEMBERSHIP_TOL) -> bool:
        raise NotImplementedError

    def support_point(self, v):
        """A minimiser of ``<x', v>`` over the set."""
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def test_points(self, n_directions=256):
        """Points whose convex hull is the set (or a dense boundary sample)."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def translated(self, offset) -> "Domain":
        raise NotImplementedError

    # -- shared ---------------------------------------------------------------
    def support_gap(self, x, v, tol=MEMBERSHIP_TOL) -> float:
        x = check_in_domain(self, x, tol)
        v = check_vector(v, self.dim, name="v")
        if not np.any(v):
            return 0.0
        xs = self.support_point(v)
        return max(0.0, float(np.dot(x - xs, v)))

    def recentered(self):
        """Return ``(domain shifted so its center is the origin, offset)``.

        Map a point back with ``x + offset``.
        """
        offset = np.array(self.center)
        return self.translated(-offset), offset

    def well_bounded_radii(self):
        return self.inner_radius, self.outer_radius


@dataclass(frozen=True, eq=False)
class Hypercube(Domain):
    lower: np.ndarray
    upper: np.ndarray
    kind = "hypercube"

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower))
        hi = _frozen(np.atleast_1d(self.upper))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("hypercube needs lower[i] < upper[i] in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d):
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def symmetric(cls, d, half_width=1.0):
        return cls(-half_width * np.ones(d), half_width * np.ones(d))

    @property
    def center(self):
        return (self.lower + self.upper) / 2

    @property
    def inner_radius(self):
        return float(np.min(self.upper - self.lower) / 2)

    @property
    def outer_radius(self):
        return float(np.linalg.norm(self.upper - self.lower) / 2)

    def project(self, p):
        p = check_vector(p, self.dim, name="p")
        return np.clip(p, self.lower, self.upper)

    def contains(self, p, tol=MEMBERSHIP_TOL):
        p = check_vector(p, self.dim, name="p")
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def support_point(self, v):
        v = check_vector(v, self.dim, name="v")
        return np.where(v < 0, self.upper, self.lower)

    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def vertices(self):
        if self.dim > 16:
            raise ValueError("refusing to enumerate 2^d vertices for d > 16")
        corners = itertools.product(*zip(self.lower, self.upper))
        return np.array(list(corners), dtype=float)

    def test_points(self, n_directions=256):
        return self.vertices()

    def to_json(self):
        return {"type": "hypercube", "lower": self.lower.tolist(),
                "upper": self.upper.tolist()}

    def translated(self, offset):
        offset = check_vector(offset, self.dim, name="offset")
        return Hypercube(self.lower + offset, self.upper + offset)


@dataclass(frozen=True, eq=False)
class Ball(Domain):
    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.center))
        if c.ndim != 1:
            raise ValueError("ball center must be a vector")
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def inner_radius(self):
        return self.radius

    @property
    def outer_radius(self):
        return self.radius

    def project(self, p):
        p = check_vector(p, self.dim, name="p")
        offset = p - self.center
        dist = np.linalg.norm(offset)
        if dist <= self.radius * (1 + _PROJECT_SNAP):
            return p
        return self.center + offset * (self.radius / dist)

    def contains(self, p, tol=MEMBERSHIP_TOL):
        p = check_vector(p, self.dim, name="p")
        return bool(np.linalg.norm(p - self.center) <= self.radius + tol)

    def support_point(self, v):
        v = check_vector(v, self.dim, name="v")
        nv = np.linalg.norm(v)
        if nv == 0:
            return np.array(self.center)
        return self.center - self.radius * v / nv

    def diameter(self):
        return 2 * self.radius

    def test_points(self, n_directions=256):
        if self.dim == 1:
            dirs = np.array([[-1.0], [1.0]])
        elif self.dim == 2:
            ang = 2 * np.pi * np.arange(n_directions) / n_directions
            dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            # Fixed seed: the sample is part of the public contract of
            # ``test_points`` and must not change between calls.
            rng = np.random.default_rng(0)
            dirs = rng.standard_normal((n_directions, self.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            dirs = np.vstack([dirs, np.eye(self.dim), -np.eye(self.dim)])
        return self.center + self.radius * dirs

    def to_json(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}

    def translated(self, offset):
        offset = check_vector(offset, self.dim, name="offset")
        return Ball(self.center + offset, self.radius)


def _segment_projection(p, a, b):
    ab = b - a
    t = float(np.dot(p - a, ab) / np.dot(ab, ab))
    t = min(1.0, max(0.0, t))
    return a + t * ab


@dataclass(frozen=True, eq=False)
class Polygon2D(Domain):
    vertices: np.ndarray
    _normals: np.ndarray = field(init=False, repr=False)
    _offsets: np.ndarray = field(init=False, repr=False)
    kind = "polygon2d"

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
            raise ValueError("polygon needs at least three 2-d vertices")
        E = np.roll(V, -1, axis=0) - V
        turn = E[:, 0] * np.roll(E, -1, axis=0)[:, 1] - E[:, 1] * np.roll(E, -1, axis=0)[:, 0]
        if not np.all(turn > 0):
            raise ValueError("polygon must be strictly convex and counter-clockwise")
        # outward unit normals n_i and offsets with <n_i, x> <= o_i inside
        normals = np.column_stack([E[:, 1], -E[:, 0]])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        object.__setattr__(self, "vertices", _frozen(V))
        object.__setattr__(self, "_normals", _frozen(normals))
        object.__setattr__(self, "_offsets", _frozen(np.einsum("ij,ij->i", normals, V)))

    @property
    def center(self):
        return self.vertices.mean(axis=0)

    @property
    def inner_radius(self):
        return float(np.min(self._offsets - self._normals @ self.center))

    @property
    def outer_radius(self):
        return float(np.max(np.linalg.norm(self.vertices - self.center, axis=1)))

    def _signed_excess(self, p):
        return self._normals @ p - self._offsets

    def project(self, p):
        p = check_vector(p, 2, name="p")
        if np.all(self._signed_excess(p) <= _PROJECT_SNAP):
            return p
        V = self.vertices
        best, best_d = None, math.inf
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            q = _segment_projection(p, a, b)
            d = float(np.sum((p - q) ** 2))
            if d < best_d:
                best, best_d = q, d
        return best

    def contains(self, p, tol=MEMBERSHIP_TOL):
        p = check_vector(p, 2, name="p")
        return bool(np.all(self._signed_excess(p) <= tol))

    def support_point(self, v):
        v = check_vector(v, 2, name="v")
        return np.array(self.vertices[int(np.argmin(self.vertices @ v))])

    def diameter(self):
        V = self.vertices
        diffs = V[:, None, :] - V[None, :, :]
        return float(np.sqrt(np.max(np.sum(diffs ** 2, axis=-1))))

    def test_points(self, n_directions=256):
        return np.array(self.vertices)

    def to_json(self):
        return {"type": "polygon2d", "vertices": self.vertices.tolist()}

    def translated(self, offset):
        offset = check_vector(offset, 2, name="offset")
        return Polygon2D(self.vertices + offset)


# functional aliases --------------------------------------------------------

def project(dom, p):
    return dom.project(p)


def support_gap(dom, x, v, tol=MEMBERSHIP_TOL):
    return dom.support_gap(x, v, tol)


def contains(dom, p, tol=MEMBERSHIP_TOL):
    return dom.contains(p, tol)


def diameter(dom):
    return dom.diameter()


def domain_from_json(obj):
    kind = obj.get("type")
    if kind == "hypercube":
        return Hypercube(obj["lower"], obj["upper"])
    if kind == "ball":
        return Ball(obj["center"], obj["radius"])
    if kind == "polygon2d":
        return Polygon2D(obj["vertices"])
    raise ValueError(f"unknown domain type {kind!r}")
