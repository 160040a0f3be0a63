"""Command-line entry point: ``perfpred {solve,reduce,sperner,stratclass,sweep}``.

Exit codes: 0 success, 1 verification failure, 2 bad input, 3 budget
exhausted or cycling.  Relative ``--out`` paths resolve against
``$PERFPRED_OUTPUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from ._validation import DomainError
from .domain import Hypercube, domain_from_json
from .instances import PerformativeInstance, shift_from_json
from .reductions import (AffineOperator, BimatrixGame, encode_endogenous, endogenous_payoffs,
                         fp_to_ps, support_enum_nash, verify_approx_nash, vi_to_ps)
from .solvers import run_ellipsoid, run_halpern, run_rrm
from .sperner import (SpernerError, SpernerInstance, brute_force_trichromatic, canonical_instance,
                      cell_distance, coloring_from_json, find_vi_solution, recover_trichromatic,
                      svi_gaps, validate_admissible)
from .stratclass import (WeightedGraph, build_maxcut_gadget, cut_start, cut_weight,
                         is_local_maxcut, is_strategic_local_opt, jury_utility, local_search,
                         recover_cut)
from .sweep import FAMILIES, SOLVERS, SweepSpec, rows_to_csv, run_sweep

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3
OUTPUT_ENV = "PERFPRED_OUTPUT_DIR"


class InputError(Exception):
    pass


def _out_path(path):
    base = os.environ.get(OUTPUT_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _emit(obj, out):
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(_out_path(out), "w") as fh:
            fh.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}")


def _parse_vector(text):
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise InputError(f"bad vector {text!r}; expected comma-separated numbers")


def default_start(dom):
    """Center plus half the inner radius along the diagonal: off-center, inside."""
    d = dom.dim
    return np.asarray(dom.center) + 0.5 * dom.inner_radius * np.ones(d) / math.sqrt(d)


# --------------------------------------------------------------------------
# subcommands

def cmd_solve(args):
    inst = PerformativeInstance.from_json(_load_json(args.instance))
    x0 = default_start(inst.domain) if args.x0 is None else _parse_vector(args.x0)
    if args.solver == "rrm":
        rep = run_rrm(inst, x0, max_iter=args.max_iter, tol=args.eps, thin=args.thin)
    elif args.solver == "halpern":
        rep = run_halpern(inst, x0, max_iter=args.max_iter, tol=args.eps, thin=args.thin)
    else:
        rep = run_ellipsoid(inst.rrm_map, inst.domain, args.eps, max_iter=args.max_iter,
                            lipschitz=max(inst.rho, 1.0))
    out = rep.to_json()
    out["solver"] = args.solver
    if args.trajectory:
        out["iterates"] = [np.asarray(x).tolist() for x in rep.iterates]
    _emit(out, args.out)
    return EXIT_OK if rep.converged else EXIT_BUDGET


def cmd_reduce(args):
    obj = _load_json(args.input)
    if args.source == "game":
        game = BimatrixGame.from_json(obj)
        enc = encode_endogenous(game, args.M)
        derived, offsets = endogenous_payoffs(enc)
        equilibria = support_enum_nash(derived)
        checks = [verify_approx_nash(game, x, y, 1.0 / enc.M) for x, y in equilibria]
        out = {"labels": enc.labels, "starCosts": enc.star_costs, "M": enc.M,
               "derivedGame": derived.to_json(), "columnOffsets": offsets,
               "equilibria": [{"x": x, "y": y, "verified": ok}
                              for (x, y), ok in zip(equilibria, checks)],
               "provenance": {"reduction": "game", "M": enc.M, "epsNash": 1.0 / enc.M}}
        _emit(out, args.out)
        return EXIT_OK if all(checks) else EXIT_VERIFY
    if args.eps is None or args.eps_prime is None:
        raise InputError("--eps and --eps-prime are required for vi and fp reductions")
    dom = domain_from_json(obj["domain"]) if "domain" in obj else None
    if args.source == "vi":
        F = AffineOperator(obj["A"], obj.get("b"))
        dom = Hypercube.unit(F.A.shape[0]) if dom is None else dom
        inst = vi_to_ps(F, F.lipschitz, args.eps, args.eps_prime, dom)
    else:
        if dom is None:
            raise InputError("fp reduction needs a 'domain' entry")
        T = shift_from_json(obj["map"] if "map" in obj else obj["shift"])
        inst = fp_to_ps(T, T.lipschitz, args.eps, args.eps_prime, dom)
    _emit(inst.to_json(), args.out)
    return EXIT_OK


def _sperner_instance(args):
    if args.coloring is None:
        return canonical_instance(args.n, args.k)
    obj = _load_json(args.coloring)
    if "coloring" in obj:  # a full instance file
        obj = dict(obj)
        obj.setdefault("n", args.n)
        obj.setdefault("k", args.k)
        return SpernerInstance.from_json(obj)
    return SpernerInstance(args.n, coloring_from_json(obj), args.k)


def cmd_sperner(args):
    inst = _sperner_instance(args)
    adm = validate_admissible(inst)
    brute = brute_force_trichromatic(inst)
    out = {"instance": inst.to_json(), "admissible": adm.ok, "bruteForce": brute}
    if not adm.ok:
        out["witness"] = adm.witness
        _emit(out, args.out)
        return EXIT_VERIFY
    try:
        x = find_vi_solution(inst)
    except SpernerError as e:
        out.update({"error": str(e), "bestPoint": getattr(e, "best_point", None),
                    "bestGap": getattr(e, "best_gap", None)})
        _emit(out, args.out)
        return EXIT_VERIFY
    out["point"] = x
    out["gap"] = float(svi_gaps(inst, x[None, :])[0])
    out["epsDoublePrime"] = inst.eps_double_prime
    try:
        tri = recover_trichromatic(inst, x)
    except SpernerError as e:
        out["error"] = str(e)
        _emit(out, args.out)
        return EXIT_VERIFY
    out["triangle"] = tri
    out["cellDistance"] = cell_distance(inst, x, [tri])
    out["matchesBruteForce"] = tri in brute
    _emit(out, args.out)
    return EXIT_OK if out["matchesBruteForce"] else EXIT_VERIFY


def cmd_stratclass(args):
    g = WeightedGraph.from_json(_load_json(args.graph))
    inst = build_maxcut_gadget(g)
    rng = np.random.default_rng(args.seed)
    runs = []
    for s in range(args.starts):
        # the first start is all-zero, the rest random cuts with edge points at 0
        f0 = cut_start(inst, rng=None if s == 0 else rng)
        res = local_search(inst, f0)
        cut = recover_cut(inst, res.labels)
        runs.append({
            "start": s, "classifier": res.labels, "utility": res.utility,
            "steps": res.steps, "localOptimum": is_strategic_local_opt(inst, res.labels),
            "cut": {"zero": cut[0], "one": cut[1]}, "cutWeight": cut_weight(g, cut),
            "localMaxCut": is_local_maxcut(g, cut),
        })
    ok = all(r["localMaxCut"] and r["localOptimum"] for r in runs)
    best = max(runs, key=lambda r: r["cutWeight"]) if runs else None
    out = {"graph": g.to_json(), "totalWeight": inst.total_weight, "runs": runs,
           "bestCutWeight": None if best is None else best["cutWeight"], "allLocalMaxCut": ok}
    if runs:
        out["initialUtility"] = jury_utility(inst, np.zeros(inst.size, dtype=np.int8))
    _emit(out, args.out)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_sweep(args):
    spec = SweepSpec(args.rho_min, args.rho_max, args.steps, args.d, args.family,
                     tuple(args.solvers.split(",")), args.eps, args.max_iter, args.seed,
                     args.repeats)
    rows = run_sweep(spec, threads=args.threads)
    text = rows_to_csv(rows)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        path = _out_path(args.out)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        with open(path + ".meta.json", "w") as fh:
            json.dump(spec.to_json(), fh, indent=2)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser():
    p = argparse.ArgumentParser(prog="perfpred", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a solver on an instance JSON")
    s.add_argument("--instance", required=True)
    s.add_argument("--solver", choices=SOLVERS, default="rrm")
    s.add_argument("--eps", type=float, default=1e-9)
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--x0", help="comma-separated start point")
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--trajectory", action="store_true", help="include iterates")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("reduce", help="build a performative instance from a VI, map or game")
    r.add_argument("--from", dest="source", choices=("vi", "fp", "game"), required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--eps", type=float)
    r.add_argument("--eps-prime", type=float)
    r.add_argument("--M", type=float, default=100.0)
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("sperner", help="find, recover and cross-check a trichromatic triangle")
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--k", type=int, default=16)
    sp.add_argument("--coloring", help="coloring or instance JSON (default canonical)")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sperner)

    st = sub.add_parser("stratclass", help="multi-start local search on the max-cut gadget")
    st.add_argument("--graph", required=True)
    st.add_argument("--starts", type=int, default=5)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", default="-")
    st.set_defaults(func=cmd_stratclass)

    sw = sub.add_parser("sweep", help="rho phase-transition sweep to CSV")
    sw.add_argument("--rho-min", type=float, default=0.5)
    sw.add_argument("--rho-max", type=float, default=1.5)
    sw.add_argument("--steps", type=int, default=21)
    sw.add_argument("--d", type=int, default=2)
    sw.add_argument("--family", choices=FAMILIES, default="negation-scaled")
    sw.add_argument("--solvers", default="rrm,halpern")
    sw.add_argument("--eps", type=float, default=1e-6)
    sw.add_argument("--max-iter", type=int, default=2000)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--repeats", type=int, default=1)
    sw.add_argument("--threads", type=int, default=1)
    sw.add_argument("--out", default="-")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, DomainError, ValueError, KeyError, TypeError) as e:
        msg = f"missing field {e}" if isinstance(e, KeyError) else str(e)
        print(f"perfpred: error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
