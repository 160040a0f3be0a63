"""Performative prediction instances with quadratic loss and mean-shift maps.

The loss is fixed to ``l(x; z) = 0.5 * ||x - z||^2`` so that ``alpha = beta = 1``
and the sensitivity ratio ``rho`` equals the Lipschitz constant of the shift
map ``g``.  Repeated risk minimisation then has the closed form
``G(x) = project(g(x))``, and every evaluation of ``G`` counts as one ERM
query.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from ._validation import (MEMBERSHIP_TOL, check_in_domain, check_matrix,
                          check_positive, check_vector)
from .domain import Domain, domain_from_json

STATUSES = ("converged", "cycling", "budget_exhausted", "degenerate")


def spectral_norm(M, n_iter=200, seed=0, rtol=1e-15, max_iter=20000):
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    Runs at least ``n_iter`` iterations and keeps going until the estimate
    stalls (relative change below ``rtol``) or ``max_iter`` is reached.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(max_iter):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            # unlucky start in the null space
            v = rng.standard_normal(M.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        new = float(np.linalg.norm(M @ v))
        if it >= n_iter and abs(new - est) <= rtol * new:
            return new
        est = new
    return est


# --------------------------------------------------------------------------
# shift maps

class ShiftMap:
    """Mean map ``g``: the induced distribution is a point mass at ``g(x)``."""

    kind = "abstract"
    lipschitz: float

    def __call__(self, x):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class Affine(ShiftMap):
    kind = "affine"

    def __init__(self, M, c=None):
        M = check_matrix(M, name="M")
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"affine shift needs a square matrix, got {M.shape}")
        c = np.zeros(M.shape[0]) if c is None else check_vector(c, M.shape[0], name="c")
        M.flags.writeable = False
        c.flags.writeable = False
        self.M, self.c = M, c
        self.lipschitz = spectral_norm(M)

    def __call__(self, x):
        return self.M @ x + self.c

    def to_json(self):
        return {"type": "affine", "M": self.M.tolist(), "c": self.c.tolist(),
                "lipschitz": self.lipschitz}


class Negation(ShiftMap):
    """``g(x) = -scale * x``; the unit-scale case is the cycling example."""

    kind = "negation"

    def __init__(self, scale=1.0):
        self.scale = check_positive(scale, "scale", strict=False)
        self.lipschitz = self.scale

    def __call__(self, x):
        return -self.scale * x

    def to_json(self):
        out = {"type": "negation", "lipschitz": self.lipschitz}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


class Custom(ShiftMap):
    """Arbitrary callable with a declared Lipschitz bound.

    ``lipschitz=None`` means undeclared and is stored as ``inf``.  A ``name``
    from ``CUSTOM_MAPS`` makes the map serialisable.
    """

    kind = "custom"

    def __init__(self, fn, lipschitz=None, name=None, params=None):
        self.fn = fn
        self.lipschitz = math.inf if lipschitz is None else check_positive(
            lipschitz, "lipschitz", strict=False)
        self.name = name
        self.params = dict(params or {})

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=float)

    def to_json(self):
        if self.name is None:
            raise ValueError("anonymous custom shift maps cannot be serialised")
        return {"type": "custom", "name": self.name, "params": self.params,
                "lipschitz": self.lipschitz}


class Damped(ShiftMap):
    """``g(x) = (1 - lam) x + lam T(x)``."""

    kind = "damped"

    def __init__(self, inner, lam, inner_lipschitz=None):
        if not isinstance(inner, ShiftMap):
            inner = Custom(inner, inner_lipschitz)
        lam = check_positive(lam, "lambda")
        if lam > 1:
            raise ValueError(f"lambda must lie in (0, 1], got {lam}")
        self.inner, self.lam = inner, lam
        self.lipschitz = (1 - lam) + lam * inner.lipschitz

    def __call__(self, x):
        return (1 - self.lam) * x + self.lam * self.inner(x)

    def to_json(self):
        return {"type": "damped", "lambda": self.lam, "inner": self.inner.to_json(),
                "lipschitz": self.lipschitz}


class SpernerWrapped(ShiftMap):
    """Shift ``g(x) = x + lam * F'(x)`` built from a Sperner operator.

    ``-F'`` is the VI operator of the construction, so this is the VI to
    stability reduction applied to it.  ``operator_lipschitz`` is declared by
    the caller (an empirical estimate is available in ``perfpred.sperner``).
    """

    kind = "sperner"

    def __init__(self, instance, lam=1.0, operator_lipschitz=None):
        self.instance = instance
        self.lam = check_positive(lam, "lambda")
        self.lipschitz = (math.inf if operator_lipschitz is None
                          else 1 + self.lam * operator_lipschitz)

    def __call__(self, x):
        from .sperner import rescaled_operator
        return x + self.lam * rescaled_operator(self.instance, x)

    def to_json(self):
        return {"type": "sperner", "lambda": self.lam, "instance": self.instance.to_json(),
                "lipschitz": self.lipschitz}


def _rotation2d(angle=math.pi / 2, scale=1.0, center=(0.0, 0.0)):
    c, s = math.cos(angle), math.sin(angle)
    R = scale * np.array([[c, -s], [s, c]])
    p = np.asarray(center, dtype=float)
    return (lambda x: p + R @ (np.asarray(x) - p)), abs(scale)


def _point_reflection(center):
    p = np.asarray(center, dtype=float)
    return (lambda x: 2 * p - np.asarray(x)), 1.0


CUSTOM_MAPS = {
    "rotation2d": _rotation2d,
    "point_reflection": _point_reflection,
}


def custom_map(name, **params):
    try:
        factory = CUSTOM_MAPS[name]
    except KeyError:
        raise ValueError(f"unknown custom map {name!r}; known: {sorted(CUSTOM_MAPS)}")
    fn, lip = factory(**params)
    return Custom(fn, lip, name=name, params=params)


def shift_from_json(obj):
    kind = obj.get("type")
    if kind == "affine":
        return Affine(obj["M"], obj.get("c"))
    if kind == "negation":
        return Negation(obj.get("scale", 1.0))
    if kind == "damped":
        return Damped(shift_from_json(obj["inner"]), obj["lambda"])
    if kind == "custom":
        if "name" not in obj:
            raise ValueError("custom shift JSON needs a registered 'name'")
        return custom_map(obj["name"], **obj.get("params", {}))
    if kind == "sperner":
        from .sperner import SpernerInstance
        inst = SpernerInstance.from_json(obj["instance"])
        lip = obj.get("lipschitz")
        lam = obj.get("lambda", 1.0)
        op_lip = None if lip is None or not math.isfinite(lip) else (lip - 1) / lam
        return SpernerWrapped(inst, lam, op_lip)
    raise ValueError(f"unknown shift type {kind!r}")


# --------------------------------------------------------------------------
# instance

class PerformativeInstance:
    """Domain plus shift map.  Immutable apart from the ERM query counters."""

    alpha = 1.0
    beta = 1.0

    def __init__(self, domain: Domain, shift: ShiftMap, provenance=None):
        if not isinstance(domain, Domain):
            raise TypeError("domain must be a Domain")
        self.domain = domain
        self.shift = shift
        self.provenance = dict(provenance or {})
        self._lock = threading.Lock()
        self._queries = 0
        self._diagnostic = 0

    @property
    def dim(self):
        return self.domain.dim

    @property
    def rho(self):
        # L * beta / alpha with alpha = beta = 1
        return self.shift.lipschitz

    @property
    def erm_queries(self):
        return self._queries

    @property
    def diagnostic_queries(self):
        return self._diagnostic

    def reset_counters(self):
        with self._lock:
            self._queries = 0
            self._diagnostic = 0

    def _count(self, diagnostic):
        with self._lock:
            if diagnostic:
                self._diagnostic += 1
            else:
                self._queries += 1

    def g(self, x):
        gx = np.asarray(self.shift(x), dtype=float)
        if gx.shape != (self.dim,):
            raise ValueError(f"shift map returned shape {gx.shape}, expected ({self.dim},)")
        return gx

    def grad(self, x):
        """Gradient of the decoupled risk at ``x`` under ``D(x)``: ``x - g(x)``."""
        return x - self.g(x)

    def rrm_map(self, x, diagnostic=False):
        x = check_in_domain(self.domain, x)
        self._count(diagnostic)
        return self.domain.project(self.g(x))

    def to_json(self):
        out = {"domain": self.domain.to_json(), "shift": self.shift.to_json()}
        if self.provenance:
            out["provenance"] = self.provenance
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(domain_from_json(obj["domain"]), shift_from_json(obj["shift"]),
                   obj.get("provenance"))

    def __repr__(self):
        return (f"PerformativeInstance(domain={self.domain.kind}, d={self.dim}, "
                f"shift={self.shift.kind}, rho={self.rho:.6g})")


def load_instance(path):
    with open(path) as fh:
        return PerformativeInstance.from_json(json.load(fh))


# --------------------------------------------------------------------------
# functional API

def rrm_map(inst, x, diagnostic=False):
    return inst.rrm_map(x, diagnostic=diagnostic)


def stability_gap(inst, x, tol=MEMBERSHIP_TOL):
    """Exact first-order stability gap ``max_{x'} <x - x', x - g(x)>``."""
    x = check_in_domain(inst.domain, x, tol)
    return inst.domain.support_gap(x, inst.grad(x), tol)


def fixed_point_gap(inst, x, diagnostic=True):
    x = check_in_domain(inst.domain, x)
    return float(np.linalg.norm(x - inst.rrm_map(x, diagnostic=diagnostic)))


_NORMS = {"l2": 2, "l1": 1, "linf": np.inf}


def residual_in_norm(inst, x, norm="l2", diagnostic=True):
    if norm not in _NORMS:
        raise ValueError(f"norm must be one of {sorted(_NORMS)}, got {norm!r}")
    x = check_in_domain(inst.domain, x)
    return float(np.linalg.norm(x - inst.rrm_map(x, diagnostic=diagnostic), ord=_NORMS[norm]))


def gap_bound_from_stability(eps, alpha=1.0):
    """Fixed-point gap bound ``sqrt(eps / alpha)`` at an eps-stable point."""
    eps = check_positive(eps, "eps", strict=False)
    alpha = check_positive(alpha, "alpha")
    return math.sqrt(eps / alpha)


def stability_bound_from_gap(eps, D, beta, grad_norm_at_G):
    """Stability bound ``eps * (D * beta + ||grad f(G(x))||)`` at an eps-fixed point."""
    eps = check_positive(eps, "eps", strict=False)
    return eps * (D * beta + grad_norm_at_G)


def check_first_order_equivalence(inst, x, tol):
    """True iff ``x`` passes both the stability and the fixed-point test.

    The fixed-point threshold is ``sqrt(tol)``, the conversion guaranteed for
    stable points.  A point that is tol-stable but fails the fixed-point test
    would contradict that conversion and raises instead of returning.
    """
    stable = stability_gap(inst, x) <= tol
    fixed = fixed_point_gap(inst, x) <= gap_bound_from_stability(tol, inst.alpha) + 1e-12
    if stable and not fixed:
        raise ArithmeticError("stable point violates the fixed-point gap conversion")
    return bool(stable and fixed)


# --------------------------------------------------------------------------
# reports

@dataclass
class SolveReport:
    final_point: np.ndarray
    fp_gap: float
    stab_gap: float
    erm_queries: int
    status: str
    wall_ms: float
    iterations: int
    iterates: list = field(default_factory=list)
    thinning: int = 1
    diagnostic_queries: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def converged(self):
        return self.status == "converged"

    def to_json(self):
        out = {
            "status": self.status,
            "fpGap": self.fp_gap,
            "stabGap": self.stab_gap,
            "ermQueries": self.erm_queries,
            "diagnosticQueries": self.diagnostic_queries,
            "iters": self.iterations,
            "wallMillis": self.wall_ms,
            "trajectoryThinning": self.thinning,
            "finalPoint": np.asarray(self.final_point).tolist(),
        }
        for key, val in self.extra.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out
