"""Encodings between VIs, fixed points, games and performative stability."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._validation import check_in_domain, check_matrix, check_positive, check_vector
from .domain import Hypercube
from .instances import Affine, Custom, Damped, PerformativeInstance, ShiftMap, spectral_norm
from .solvers import svi_gap

DEFAULT_EPS_PRIME = 0.088 / 6


class AffineOperator:
    """``F(x) = A x + b`` with its exact spectral-norm Lipschitz constant."""

    def __init__(self, A, b=None):
        A = check_matrix(A, name="A")
        if A.shape[0] != A.shape[1]:
            raise ValueError("affine operator needs a square matrix")
        self.A = A
        self.b = np.zeros(A.shape[0]) if b is None else check_vector(b, A.shape[0], name="b")
        self.lipschitz = spectral_norm(A)

    def __call__(self, x):
        return self.A @ x + self.b


def _ratio(eps, eps_prime):
    eps = check_positive(eps, "eps")
    eps_prime = check_positive(eps_prime, "epsPrime")
    return eps, eps_prime, eps / eps_prime


def vi_to_ps(F, L_F, eps, eps_prime, dom):
    """Shift ``g(x) = x - (eps/eps') F(x)``: eps-stable points solve the VI to eps'.

    The stability gap of the reduced instance is exactly ``lam * svi_gap``.
    Ratios above 1 are allowed (capping would void the guarantee) but warn,
    because ``rho`` then exceeds ``1 + L_F``.
    """
    eps, eps_prime, lam = _ratio(eps, eps_prime)
    if lam > 1:
        warnings.warn(f"eps/epsPrime = {lam:g} > 1; rho bound degrades to {1 + lam * L_F:g}")
    if isinstance(F, AffineOperator):
        shift = Affine(np.eye(dom.dim) - lam * F.A, -lam * F.b)
    else:
        lip = None if L_F is None else 1 + lam * L_F
        shift = Custom(lambda x: x - lam * np.asarray(F(x), dtype=float), lip)
    prov = {"reduction": "vi", "eps": eps, "epsPrime": eps_prime, "lambda": lam,
            "rhoBound": None if L_F is None else 1 + lam * L_F}
    return PerformativeInstance(dom, shift, prov)


def fp_to_ps(T, L_T, eps, eps_prime, dom):
    """Shift ``g(x) = (1 - lam) x + lam T(x)`` with ``lam = eps/eps'``.

    ``lam`` is capped at 1 with a warning; the certified fixed-point accuracy
    is then ``eps / lam`` and is recorded in the provenance block.
    """
    eps, eps_prime, lam = _ratio(eps, eps_prime)
    if lam > 1:
        warnings.warn(f"eps/epsPrime = {lam:g} > 1; capping lambda at 1")
        lam = 1.0
    inner = T if isinstance(T, ShiftMap) else Custom(T, L_T)
    shift = Damped(inner, lam)
    prov = {"reduction": "fp", "eps": eps, "epsPrime": eps_prime, "lambda": lam,
            "certifiedEpsPrime": eps / lam, "rhoBound": (1 - lam) + lam * inner.lipschitz}
    return PerformativeInstance(dom, shift, prov)


def matrix_norms(A):
    """``(||A||_1, ||A||_inf, ||A||_2)``: max column sum, max row sum, spectral."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return (float(np.abs(A).sum(axis=0).max()), float(np.abs(A).sum(axis=1).max()),
            spectral_norm(A))


def gen_affine_hard(A, b, eps, eps_prime=None, dom=None):
    """The affine hard family ``g(x) = (I - lam A) x - lam b`` on ``[0,1]^d``."""
    A = check_matrix(A, name="A")
    d = A.shape[0]
    b = check_vector(b, d, name="b")
    n1, ninf, n2 = matrix_norms(A)
    if n1 > 1 + 1e-12 or ninf > 1 + 1e-12:
        raise ValueError(f"need ||A||_1 <= 1 and ||A||_inf <= 1, got {n1:g}, {ninf:g}")
    bound = math.sqrt(n1 * ninf)
    if n2 > bound + 1e-9:
        raise ArithmeticError(f"spectral norm {n2} exceeds sqrt(||A||_1 ||A||_inf) = {bound}")
    eps_prime = DEFAULT_EPS_PRIME if eps_prime is None else eps_prime
    dom = Hypercube.unit(d) if dom is None else dom
    inst = vi_to_ps(AffineOperator(A, b), n2, eps, eps_prime, dom)
    inst.provenance.update({"reduction": "affine-hard", "normBound": bound,
                            "rhoBound": 1 + inst.provenance["lambda"]})
    return inst


def certify_vi_from_ps(F, dom, x_star, eps, eps_prime, tol=1e-9):
    """Truth of ``stability_gap <= eps  =>  svi_gap <= eps'`` at ``x_star``."""
    from .instances import stability_gap
    inst = vi_to_ps(F, getattr(F, "lipschitz", None), eps, eps_prime, dom)
    x = check_in_domain(dom, x_star, name="xStar")
    if stability_gap(inst, x) > eps:
        return True
    return bool(svi_gap(F, dom, x) <= eps_prime + tol)


def certify_fp_from_ps(T, inst, x, eps, tol=1e-9):
    """Truth of ``||x - G(x)|| <= eps  =>  ||x - T(x)|| <= certified eps'``."""
    from .instances import fixed_point_gap
    x = check_in_domain(inst.domain, x)
    if fixed_point_gap(inst, x) > eps:
        return True
    target = inst.provenance.get("certifiedEpsPrime", inst.provenance.get("epsPrime"))
    return bool(np.linalg.norm(x - np.asarray(T(x))) <= target + tol)


# --------------------------------------------------------------------------
# games

@dataclass
class BimatrixGame:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = check_matrix(self.A, name="A")
        self.B = check_matrix(self.B, shape=self.A.shape, name="B")

    @property
    def shape(self):
        return self.A.shape

    @property
    def win_loss(self):
        return bool(np.all(np.isin(self.A, (0, 1))) and np.all(np.isin(self.B, (0, 1))))

    def to_json(self):
        return {"A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["A"], obj["B"])


def _on_simplex(p, size, tol=1e-9):
    p = np.asarray(p, dtype=float)
    return p.shape == (size,) and np.all(p >= -tol) and abs(p.sum() - 1) <= tol


def verify_approx_nash(game, x, y, eps):
    """Both players are within ``eps`` of a pure best response."""
    n, m = game.shape
    if not (_on_simplex(x, n) and _on_simplex(y, m)):
        return False
    Ay = game.A @ y
    xB = x @ game.B
    return bool(x @ Ay >= Ay.max() - eps and xB @ y >= xB.max() - eps)


def _support_strategy(P, I, J):
    """Mixed strategy on rows ``I`` of ``P`` equalising columns ``J`` as best replies.

    Solved as an LP feasibility problem so degenerate games are handled:
    ``x >= 0`` on ``I``, zero elsewhere, ``(x P)_j = v`` on ``J`` and
    ``(x P)_j <= v`` off ``J``.
    """
    n, m = P.shape
    I = list(I)
    k = len(I)
    # variables: x_I (k) and v
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for j in range(m):
        row = np.append(P[I, j], -1.0)
        if j in J:
            A_eq.append(row)
            b_eq.append(0.0)
        else:
            A_ub.append(row)
            b_ub.append(0.0)
    A_eq.append(np.append(np.ones(k), 0.0))
    b_eq.append(1.0)
    bounds = [(0, None)] * k + [(None, None)]
    res = linprog(np.zeros(k + 1), A_ub=np.array(A_ub) if A_ub else None,
                  b_ub=b_ub or None, A_eq=np.array(A_eq), b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None
    x = np.zeros(n)
    x[I] = np.clip(res.x[:k], 0, None)
    return x / x.sum()


def support_enum_nash(game, max_support=3, tol=1e-9):
    """All equilibria found by enumerating support pairs in lexicographic order.

    Each support pair yields at most one candidate (a vertex of its
    feasibility polytope); candidates are verified and duplicates within
    ``tol`` merged.
    """
    n, m = game.shape
    if n > 5 or m > 5:
        raise ValueError("support enumeration is limited to games up to 5x5")
    found = []
    for sx in range(1, min(max_support, n) + 1):
        for I in itertools.combinations(range(n), sx):
            for sy in range(1, min(max_support, m) + 1):
                for J in itertools.combinations(range(m), sy):
                    # x makes the column player indifferent on J, y the row player on I
                    x = _support_strategy(game.B, I, set(J))
                    if x is None:
                        continue
                    y = _support_strategy(game.A.T, J, set(I))
                    if y is None:
                        continue
                    if not verify_approx_nash(game, x, y, tol):
                        continue
                    if any(np.allclose(x, fx, atol=tol) and np.allclose(y, fy, atol=tol)
                           for fx, fy in found):
                        continue
                    found.append((x, y))
    return found


@dataclass
class EndogenousInstance:
    """Strategic classification with endogenous costs built from a win-loss game.

    Points ``x_1..x_n`` carry uniform weight and target label 0; classifier
    ``j`` labels point ``i`` with ``labels[i, j]`` and its deployment makes
    the cost of moving ``x_i`` to the distinguished point ``x*`` equal to
    ``star_costs[i, j]``.  Deviation ``i`` always moves to ``x_i``.
    """

    labels: np.ndarray
    star_costs: np.ndarray
    M: float

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def m(self):
        return self.labels.shape[1]

    @property
    def weights(self):
        return np.full(self.n, 1.0 / self.n)

    @property
    def deviations(self):
        return list(range(self.n))


def encode_endogenous(game, M):
    if not game.win_loss:
        raise ValueError("encode_endogenous needs a win-loss game (entries in {0,1})")
    M = check_positive(M, "M")
    if M <= 1:
        raise ValueError(f"M must exceed 1, got {M}")
    labels = (1 - game.B).astype(int)
    costs = 2 * M - M * game.A
    return EndogenousInstance(labels, costs, M)


def endogenous_payoffs(inst):
    """Return ``(game, offsets)`` with ``A' = F + M A - 2M`` and column offsets.

    ``offsets[j] = -(1/n) sum_i c_j(x_i, x*)`` enters the row player's payoff
    only through the column choice and is strategically irrelevant.
    """
    Fm = inst.labels.astype(float)
    B = 1 - Fm
    # F + M A - 2M equals F - costs; the latter avoids a round trip through A
    A_prime = Fm - inst.star_costs
    offsets = -inst.star_costs.mean(axis=0)
    return BimatrixGame(A_prime, B), offsets
