"""Estimator-style wrappers over the solvers.

Hyperparameters go to ``__init__`` and are exposed through
``get_params``/``set_params``; ``fit`` takes the problem in place of ``X``
and returns ``self`` with fitted attributes ending in ``_``.  There is no
``predict``: the output of a fit is a point or a classifier, not a model
of new data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .solvers import hypomonotone_solve, run_ellipsoid, run_halpern, run_rrm
from .stratclass import is_strategic_local_opt, local_search


class _FixedPointSolver(BaseEstimator):
    def _start(self, inst, x0):
        return np.asarray(inst.domain.center if x0 is None else x0, dtype=float)

    def _store(self, report):
        self.report_ = report
        self.solution_ = np.asarray(report.final_point)
        self.status_ = report.status
        self.n_iter_ = report.iterations
        self.erm_queries_ = report.erm_queries
        return self

    def score(self, inst, y=None):
        """Negative fixed-point residual of the fitted point on ``inst``."""
        check_is_fitted(self, "solution_")
        return -float(np.linalg.norm(self.solution_ - inst.rrm_map(self.solution_, diagnostic=True)))


class RRMSolver(_FixedPointSolver):
    def __init__(self, max_iter=1000, tol=1e-9, thin=1):
        self.max_iter = max_iter
        self.tol = tol
        self.thin = thin

    def fit(self, inst, x0=None):
        rep = run_rrm(inst, self._start(inst, x0), max_iter=self.max_iter, tol=self.tol,
                      thin=self.thin)
        return self._store(rep)


class HalpernSolver(_FixedPointSolver):
    def __init__(self, max_iter=10000, tol=1e-9, thin=1):
        self.max_iter = max_iter
        self.tol = tol
        self.thin = thin

    def fit(self, inst, x0=None):
        rep = run_halpern(inst, self._start(inst, x0), max_iter=self.max_iter, tol=self.tol,
                          thin=self.thin)
        return self._store(rep)


class EllipsoidSolver(_FixedPointSolver):
    """Ellipsoid search on the RRM map of an instance (``x0`` is ignored)."""

    def __init__(self, eps=1e-8, max_iter=None, lipschitz=1.0):
        self.eps = eps
        self.max_iter = max_iter
        self.lipschitz = lipschitz

    def fit(self, inst, x0=None):
        rep = run_ellipsoid(inst.rrm_map, inst.domain, self.eps, max_iter=self.max_iter,
                            lipschitz=self.lipschitz)
        return self._store(rep)


class HypomonotoneVISolver(BaseEstimator):
    """Averaged iterate plus certificates for ``F`` sigma-hypomonotone on ``dom``."""

    def __init__(self, sigma=0.01, eps=1e-3, budget=2000, lipschitz=1.0):
        self.sigma = sigma
        self.eps = eps
        self.budget = budget
        self.lipschitz = lipschitz

    def fit(self, F, dom, x0=None):
        mean, cert = hypomonotone_solve(F, self.sigma, dom, self.eps, budget=self.budget,
                                        lipschitz=self.lipschitz, x0=x0)
        self.solution_ = mean
        self.certificates_ = cert
        self.svi_gap_ = cert["svi_measured"]
        return self


class StrategicLocalSearch(BaseEstimator):
    """First-improvement local search for a strategic local optimum."""

    def __init__(self, max_steps=None):
        self.max_steps = max_steps

    def fit(self, inst, f0=None):
        f0 = np.zeros(inst.size, dtype=np.int8) if f0 is None else f0
        res = local_search(inst, f0, max_steps=self.max_steps)
        self.labels_ = res.labels
        self.utility_ = res.utility
        self.path_ = res.path
        self.utilities_ = res.utilities
        self.is_local_opt_ = is_strategic_local_opt(inst, res.labels)
        return self
