"""Solvers, reductions and certificates for performative prediction."""

from ._validation import DomainError
from .domain import Ball, Domain, Hypercube, Polygon2D, domain_from_json
from .estimators import (EllipsoidSolver, HalpernSolver, HypomonotoneVISolver, RRMSolver,
                         StrategicLocalSearch)
from .instances import (Affine, Custom, Damped, Negation, PerformativeInstance, SolveReport,
                        fixed_point_gap, load_instance, stability_gap)
from .reductions import (AffineOperator, BimatrixGame, encode_endogenous, fp_to_ps,
                         gen_affine_hard, support_enum_nash, vi_to_ps)
from .solvers import hypomonotone_solve, run_ellipsoid, run_halpern, run_rrm
from .sperner import SpernerInstance, canonical_instance, find_vi_solution, planted_instance
from .stratclass import WeightedGraph, build_maxcut_gadget, local_search
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"

__all__ = [
    "Affine", "AffineOperator", "Ball", "BimatrixGame", "Custom", "Damped", "Domain",
    "DomainError", "EllipsoidSolver", "HalpernSolver", "Hypercube", "HypomonotoneVISolver",
    "Negation", "PerformativeInstance", "Polygon2D", "RRMSolver", "SolveReport",
    "SpernerInstance", "StrategicLocalSearch", "SweepSpec", "WeightedGraph",
    "build_maxcut_gadget", "canonical_instance", "domain_from_json", "encode_endogenous",
    "find_vi_solution", "fixed_point_gap", "fp_to_ps", "gen_affine_hard",
    "hypomonotone_solve", "load_instance", "local_search", "planted_instance", "run_ellipsoid",
    "run_halpern", "run_rrm", "run_sweep", "stability_gap", "support_enum_nash", "vi_to_ps",
]
