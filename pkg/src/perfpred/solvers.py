"""Fixed-point and VI solvers.

``run_rrm`` and ``run_halpern`` act on a :class:`PerformativeInstance` and
count ERM queries through it.  ``run_ellipsoid`` takes any self-map of a
domain.  The hypomonotone pipeline at the bottom pairs a tail-averaging
heuristic with exact certificates; it does not claim a polynomial rate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ._validation import (MEMBERSHIP_TOL, DomainError, check_in_domain,
                          check_positive, check_vector)
from .instances import SolveReport, fixed_point_gap, stability_gap

CYCLE_TOL = 1e-10
# ratio between the two-step return distance and the one-step move below
# which a near-return counts as a genuine period-2 orbit; keeps fast
# contractions near their limit from being mistaken for cycles
CYCLE_RATIO = 1e-3


def _ms_since(t0):
    return (time.perf_counter() - t0) * 1e3


def _thin(iterates, every):
    return iterates if every <= 1 else iterates[::every]


def _finish(inst, x, status, t0, iterations, iterates, thin, queries0, extra=None):
    q = inst.erm_queries - queries0
    return SolveReport(
        final_point=x,
        fp_gap=fixed_point_gap(inst, x),
        stab_gap=stability_gap(inst, x),
        erm_queries=q,
        status=status,
        wall_ms=_ms_since(t0),
        iterations=iterations,
        iterates=_thin(iterates, thin),
        thinning=thin,
        diagnostic_queries=inst.diagnostic_queries,
        extra=extra or {},
    )


def run_rrm(inst, x0, max_iter=1000, tol=1e-9, thin=1):
    """Repeated risk minimisation ``x_{t+1} = G(x_t)`` with a period-2 detector."""
    t0 = time.perf_counter()
    tol = check_positive(tol, "tol")
    x = check_in_domain(inst.domain, x0, name="x0")
    q0 = inst.erm_queries
    iterates = [x]
    prev = None
    status = "budget_exhausted"
    t = 0
    for t in range(max_iter + 1):
        gx = inst.rrm_map(x)
        gap = float(np.linalg.norm(x - gx))
        if gap <= tol:
            status = "converged"
            break
        if prev is not None:
            back = float(np.linalg.norm(gx - prev))
            if back <= CYCLE_TOL and back <= CYCLE_RATIO * gap:
                status = "cycling"
                break
        if t == max_iter:
            break
        prev, x = x, gx
        iterates.append(x)
    return _finish(inst, x, status, t0, t, iterates, thin, q0)


def run_halpern(inst, x0, max_iter=10000, tol=1e-9, thin=1):
    """Anchored iteration ``x_{k+1} = P(b_k x0 + (1 - b_k) G(x_k))``, ``b_k = 1/(k+2)``.

    For nonexpansive ``G`` the residual obeys ``||x_k - G(x_k)|| <= 2D/(k+1)``;
    every iteration is checked and violations are listed in
    ``report.extra['rate_violations']`` as ``(k, gap, bound)``.
    """
    t0 = time.perf_counter()
    tol = check_positive(tol, "tol")
    dom = inst.domain
    anchor = check_in_domain(dom, x0, name="x0")
    D = dom.diameter()
    q0 = inst.erm_queries
    x = anchor
    iterates = [x]
    violations = []
    status = "budget_exhausted"
    k = 0
    for k in range(max_iter + 1):
        gx = inst.rrm_map(x)
        gap = float(np.linalg.norm(x - gx))
        bound = 2 * D / (k + 1)
        if gap > bound + 1e-9:
            violations.append((k, gap, bound))
        if gap <= tol:
            status = "converged"
            break
        if k == max_iter:
            break
        beta = 1.0 / (k + 2)
        x = dom.project(beta * anchor + (1 - beta) * gx)
        iterates.append(x)
    extra = {"rate_violations": violations, "rho": inst.rho}
    return _finish(inst, x, status, t0, k, iterates, thin, q0, extra)


# --------------------------------------------------------------------------
# ellipsoid

@dataclass
class EllipsoidState:
    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.shape)[0])


def ellipsoid_budget(d, R2, lipschitz, eps):
    return max(1, math.ceil(2 * d * (d + 1) * math.log(R2 * (lipschitz + 2) / eps)))


def _ellipsoid_step(state, g):
    """Central cut keeping ``{y : <g, y - c> <= 0}``."""
    c, P = state.center, state.shape
    d = c.shape[0]
    Pg = P @ g
    gPg = float(g @ Pg)
    if gPg <= 0:
        return False
    gt = Pg / math.sqrt(gPg)
    if d == 1:
        # interval bisection; the central-cut formula degenerates for d = 1
        state.center = c - gt / 2
        state.shape = P / 4
    else:
        state.center = c - gt / (d + 1)
        P = (d * d / (d * d - 1.0)) * (P - (2.0 / (d + 1)) * np.outer(gt, gt))
        state.shape = (P + P.T) / 2
    state.iteration += 1
    return True


def run_ellipsoid(T, dom, eps, max_iter=None, lipschitz=1.0, map_tol=1e-9):
    """Ellipsoid method for an ``eps``-fixed point of a nonexpansive ``T: dom -> dom``.

    Every center is tested; a center inside the domain with residual above
    ``eps`` is cut with ``g = c - T(c)``, one outside is cut with the
    domain's separating hyperplane.  The eigenvalue floor is
    ``1e-14 R2^2 (eps / (R2 (L + 2)))^2``; reaching it returns status
    ``degenerate``.
    """
    t0 = time.perf_counter()
    eps = check_positive(eps, "eps")
    d = dom.dim
    R2 = dom.outer_radius
    budget = ellipsoid_budget(d, R2, lipschitz, eps) if max_iter is None else int(max_iter)
    floor = 1e-14 * R2 ** 2 * (eps / (R2 * (lipschitz + 2))) ** 2
    state = EllipsoidState(np.array(dom.center, dtype=float), R2 ** 2 * np.eye(d))
    evals = 0
    best_x, best_res = None, math.inf
    status = "budget_exhausted"

    def apply(c):
        nonlocal evals
        evals += 1
        tc = check_vector(T(c), d, name="T(c)")
        if not dom.contains(tc, 0.0):
            if not dom.contains(tc, map_tol):
                raise DomainError(f"T maps {c.tolist()} outside the domain")
            tc = dom.project(tc)
        return tc

    while state.iteration < budget:
        c = state.center
        if not dom.contains(c, 0.0):
            g = c - dom.project(c)
        else:
            r = apply(c) - c
            res = float(np.linalg.norm(r))
            if res < best_res:
                best_x, best_res = c.copy(), res
            if res <= eps:
                status = "converged"
                break
            g = -r
        if not _ellipsoid_step(state, g):
            status = "degenerate"
            break
        if state.min_eigenvalue() < floor:
            status = "degenerate"
            break

    if best_x is None:
        best_x = dom.project(state.center)
    # post hoc verification of the returned point
    r = apply(best_x) - best_x
    residual = float(np.linalg.norm(r))
    if status == "converged" and residual > eps:
        status = "budget_exhausted"
    stab = dom.support_gap(best_x, -r)
    return SolveReport(
        final_point=best_x, fp_gap=residual, stab_gap=stab, erm_queries=evals,
        status=status, wall_ms=_ms_since(t0), iterations=state.iteration,
        extra={"budget": budget, "eigen_floor": floor,
               "min_eigenvalue": state.min_eigenvalue()},
    )


# --------------------------------------------------------------------------
# VI gaps and certificates

@dataclass
class WeightedSample:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (P.shape[0],):
            raise ValueError("one weight per point required")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()}, expected 1")
        self.points, self.weights = P, w

    @classmethod
    def uniform(cls, points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(P, np.full(P.shape[0], 1.0 / P.shape[0]))

    @property
    def mean(self):
        return self.weights @ self.points

    def check_domain(self, dom, tol=MEMBERSHIP_TOL):
        for p in self.points:
            check_in_domain(dom, p, tol, name="sample point")


def svi_gap(F, dom, x):
    """Exact Stampacchia gap ``max_{x'} <F(x), x - x'>``."""
    x = check_in_domain(dom, x)
    return dom.support_gap(x, np.asarray(F(x), dtype=float))


def mvi_gap_estimate(F, dom, xbar, sample_points):
    """Estimate of the Minty gap ``max_{x'} <F(x'), xbar - x'>`` over the supplied points.

    Only a lower estimate of the true Minty gap; the maximum over the
    domain is not computed.
    """
    xbar = check_in_domain(dom, xbar, name="xbar")
    vals = [float(np.dot(F(p), xbar - p)) for p in np.atleast_2d(sample_points)]
    return max(0.0, max(vals)) if vals else 0.0


def verify_evi(F, dom, sample, eps, test_points=None):
    """Check ``E_{x~mu} <F(x), x - x'> <= eps`` for every test point ``x'``.

    The functional is affine in ``x'``, so its maximum over the domain is
    attained at the support point of the mean operator value; that point is
    always added to the test set, which makes the check exact.
    Returns ``(passed, worst_gap)``.
    """
    sample.check_domain(dom)
    Fx = np.array([np.asarray(F(p), dtype=float) for p in sample.points])
    const = float(sample.weights @ np.einsum("ij,ij->i", Fx, sample.points))
    Fbar = sample.weights @ Fx
    pts = [dom.support_point(Fbar)]
    extra = dom.test_points() if test_points is None else np.atleast_2d(test_points)
    pts.extend(extra)
    worst = max(const - float(Fbar @ p) for p in pts)
    return bool(worst <= eps), worst


def hypomonotone_constant(sigma):
    """``I - T`` is ``(sigma + sigma^2/2)``-hypomonotone for ``(1+sigma)``-Lipschitz ``T``."""
    return sigma + sigma ** 2 / 2


def mvi_svi_bound(eps, L, D):
    """Convert an eps-Minty point into a Stampacchia gap bound.

    Returns ``(delta_star, bound)`` with ``delta_star = min(1, sqrt(eps/(L D^2)))``.
    """
    eps = check_positive(eps, "eps", strict=False)
    L = check_positive(L, "L")
    D = check_positive(D, "D")
    if eps == 0:
        return 0.0, 0.0
    delta = math.sqrt(eps / (L * D * D))
    if delta < 1:
        return delta, 2 * D * math.sqrt(L * eps)
    return 1.0, eps + L * D * D


def evi_certificate_bounds(eps_hat, sigma, D, L):
    """Minty and Stampacchia bounds at the mean of an ``eps_hat``-EVI sample."""
    mvi = eps_hat + sigma * D * D
    _, svi = mvi_svi_bound(max(mvi, 0.0), L, D)
    return mvi, svi


def fixed_point_bound(eps, sigma, D):
    """Fixed-point accuracy of the EVI route for a ``(1+sigma)``-Lipschitz map."""
    inner = (2 + sigma) * (eps + hypomonotone_constant(sigma) * D * D)
    return math.sqrt(2 * D * math.sqrt(inner))


def hypomonotone_solve(F, sigma, dom, eps, budget=2000, lipschitz=1.0, x0=None):
    """Tail-averaged anchored iteration plus certificates.

    The heuristic runs Halpern steps on ``T(x) = P(x - gamma F(x))`` with
    ``gamma = 1 / (L + sigma + 1)`` and averages the last half of the iterates
    uniformly.  Certificates: the exact EVI residual of that sample, the
    Minty bound ``eps_hat + sigma D^2``, the Stampacchia bound derived from
    it, and the measured Stampacchia gap at the mean.
    """
    sigma = check_positive(sigma, "sigma", strict=False)
    L = check_positive(lipschitz, "lipschitz")
    gamma = 1.0 / (L + sigma + 1)
    anchor = np.array(dom.center) if x0 is None else check_in_domain(dom, x0, name="x0")
    x = anchor
    its = [x]
    for k in range(budget):
        tx = dom.project(x - gamma * np.asarray(F(x), dtype=float))
        if np.linalg.norm(tx - x) <= 1e-14:
            break
        beta = 1.0 / (k + 2)
        x = dom.project(beta * anchor + (1 - beta) * tx)
        its.append(x)
    tail = np.array(its[len(its) // 2:])
    sample = WeightedSample.uniform(tail)
    mean = dom.project(sample.mean)
    D = dom.diameter()
    passed, eps_hat = verify_evi(F, dom, sample, eps)
    mvi_bound, svi_bound = evi_certificate_bounds(max(eps_hat, 0.0), sigma, D, L)
    measured = svi_gap(F, dom, mean)
    certificates = {
        "heuristic": "tail-averaged anchored iteration",
        "evi_residual": eps_hat,
        "evi_passed": passed,
        "mvi_bound": mvi_bound,
        "mvi_estimate": mvi_gap_estimate(F, dom, mean, tail),
        "svi_bound": svi_bound,
        "svi_measured": measured,
        "chain_holds": bool(measured <= svi_bound + 1e-9),
        "iterations": len(its) - 1,
        "sample_size": tail.shape[0],
    }
    if passed and not certificates["chain_holds"]:
        raise ArithmeticError("certificate chain violated: measured gap exceeds bound")
    return mean, certificates
