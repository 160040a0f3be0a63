"""The rho phase-transition sweep: one CSV row per (rho, solver, seed)."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import Hypercube
from .instances import Affine, Negation, PerformativeInstance
from .solvers import run_ellipsoid, run_halpern, run_rrm

CSV_COLUMNS = ("instance_id", "rho", "solver", "seed", "iterations", "erm_queries",
               "final_fp_gap", "final_stab_gap", "status", "wall_ms")
FAMILIES = ("negation-scaled", "affine-random")
SOLVERS = ("rrm", "halpern", "ellipsoid")
GENERATOR = "numpy.random.default_rng/PCG64"


@dataclass(frozen=True)
class SweepSpec:
    rho_min: float = 0.5
    rho_max: float = 1.5
    steps: int = 21
    d: int = 2
    family: str = "negation-scaled"
    solvers: tuple = ("rrm", "halpern")
    eps: float = 1e-6
    max_iter: int = 2000
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if not self.rho_min <= self.rho_max:
            raise ValueError("rho_min must not exceed rho_max")
        if int(self.steps) < 1 or int(self.repeats) < 1 or int(self.d) < 1:
            raise ValueError("steps, repeats and d must be positive")
        if not self.eps > 0 or int(self.max_iter) < 1:
            raise ValueError("eps and max_iter must be positive")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        object.__setattr__(self, "solvers", tuple(self.solvers))
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad or not self.solvers:
            raise ValueError(f"solvers must be a non-empty subset of {SOLVERS}, got {bad}")

    def rho_grid(self):
        if self.steps == 1:
            return [float(self.rho_min)]
        # rounding makes grid values like 1.0 land exactly
        return [round(float(r), 12) for r in np.linspace(self.rho_min, self.rho_max, self.steps)]

    def seeds(self):
        return [self.seed + i for i in range(self.repeats)]

    def to_json(self):
        out = asdict(self)
        out["solvers"] = list(self.solvers)
        out["generator"] = GENERATOR
        return out


def make_instance(family, rho, d, seed):
    """Instance with shift Lipschitz constant exactly ``rho`` on ``[-1, 1]^d``."""
    dom = Hypercube.symmetric(d)
    if family == "negation-scaled":
        shift = Negation(rho)
    elif family == "affine-random":
        B = np.random.default_rng(seed).standard_normal((d, d))
        shift = Affine(rho * B / np.linalg.norm(B, 2))
    else:
        raise ValueError(f"unknown family {family!r}")
    return PerformativeInstance(dom, shift, {"family": family, "rho": rho, "seed": seed,
                                             "generator": GENERATOR})


def start_point(d, seed):
    # offset stream so x0 does not reuse the affine matrix draws
    rng = np.random.default_rng([seed, 1])
    x = rng.uniform(-1, 1, d)
    while not np.any(x):
        x = rng.uniform(-1, 1, d)
    return x


def _run_cell(spec, rho, solver, seed):
    inst = make_instance(spec.family, rho, spec.d, seed)
    x0 = start_point(spec.d, seed)
    if solver == "rrm":
        rep = run_rrm(inst, x0, max_iter=spec.max_iter, tol=spec.eps)
    elif solver == "halpern":
        rep = run_halpern(inst, x0, max_iter=spec.max_iter, tol=spec.eps)
    else:
        rep = run_ellipsoid(inst.rrm_map, inst.domain, spec.eps,
                            max_iter=spec.max_iter, lipschitz=max(rho, 1.0))
    return {
        "instance_id": f"{spec.family}-d{spec.d}-rho{rho!r}-s{seed}",
        "rho": repr(rho),
        "solver": solver,
        "seed": str(seed),
        "iterations": str(rep.iterations),
        "erm_queries": str(rep.erm_queries),
        "final_fp_gap": repr(float(rep.fp_gap)),
        "final_stab_gap": repr(float(rep.stab_gap)),
        "status": rep.status,
        "wall_ms": f"{rep.wall_ms:.3f}",
    }


def run_sweep(spec, threads=1):
    """Rows as dicts of strings, ordered by (rho, solver index, seed)."""
    cells = [(rho, s, seed) for rho in spec.rho_grid() for s in spec.solvers
             for seed in spec.seeds()]
    threads = max(1, min(int(threads), os.cpu_count() or 1))
    if threads == 1:
        return [_run_cell(spec, *c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map preserves submission order whatever the completion order
        return list(pool.map(lambda c: _run_cell(spec, *c), cells))


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
