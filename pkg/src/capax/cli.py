"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 solver non-convergence or failed
verification checks.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import CapaxError
from .geometry import NodeSet, SubsetMask, as_mask, build_exhaustion, discretize, shape_from_json
from .kernels import MatrixKernel, assemble_gram, certify, kernel_from_json
from .measures import DiscreteMeasure, read_vector_csv, save_json, write_potential_csv

log = logging.getLogger("capax")

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2
DEFAULT_RESOLUTION = {"sphere": 400, "ball": 4, "box": 5, "annulus": 3, "cloud": 1}
FORMULATION_NAMES = {"primal": "primal", "dual": "dual", "obstacle": "obstacle", "minmass": "min_mass",
                     "massmax": "mass_max"}


class InputError(Exception):
    pass


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from exc


def _model(args):
    """Kernel, node set and Gram form from --kernel/--shape/--matrix."""
    if args.matrix:
        obj = _load_json(args.matrix)
        entries = obj["entries"] if isinstance(obj, dict) else obj
        kernel = MatrixKernel(np.asarray(entries, dtype=float))
        nodes = NodeSet.indexed(len(kernel))
    else:
        if not args.kernel:
            raise InputError("either --kernel or --matrix is required")
        kernel = kernel_from_json(_load_json(args.kernel))
        if isinstance(kernel, MatrixKernel):
            nodes = NodeSet.indexed(len(kernel))
        else:
            if not args.shape:
                raise InputError("analytic kernels need --shape")
            shape = shape_from_json(_load_json(args.shape), base_dir=Path(args.shape).parent)
            res = args.resolution or DEFAULT_RESOLUTION[shape.kind]
            nodes = discretize(shape, res)
    gram = assemble_gram(kernel, nodes, samples=args.samples, seed=args.seed)
    return kernel, nodes, gram


def _subset(spec_path, nodes: NodeSet, default_full=True) -> SubsetMask:
    if not spec_path:
        if default_full:
            return nodes.full_mask
        raise InputError("a subset is required")
    obj = _load_json(spec_path)
    return subset_from_json(obj, nodes)


def subset_from_json(obj, nodes: NodeSet) -> SubsetMask:
    """``[..]`` / ``{"indices": [..]}`` / ``{"all": true}`` / ``{"label": name}``."""
    if isinstance(obj, list):
        return as_mask(obj, len(nodes))
    if not isinstance(obj, dict):
        raise InputError("subset must be a list or an object")
    if obj.get("all"):
        return nodes.full_mask
    if "label" in obj:
        try:
            return nodes.mask(obj["label"])
        except KeyError as exc:
            raise InputError(f"unknown node label {obj['label']!r}") from exc
    if "indices" in obj:
        return as_mask(obj["indices"], len(nodes))
    raise InputError("subset needs 'indices', 'all' or 'label'")


def _measure(path, n, node_set_id) -> DiscreteMeasure:
    if not path:
        raise InputError("--measure is required")
    if str(path).endswith(".csv"):
        try:
            return DiscreteMeasure(read_vector_csv(path, n), node_set_id)
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
    obj = _load_json(path)
    if isinstance(obj, dict) and "dirac" in obj:
        return DiscreteMeasure.dirac(n, int(obj["dirac"]), float(obj.get("mass", 1.0)), node_set_id)
    w = obj["weights"] if isinstance(obj, dict) else obj
    w = np.asarray(w, dtype=float)
    if w.size != n:
        raise InputError(f"measure has {w.size} weights, model has {n} nodes")
    return DiscreteMeasure(w, node_set_id)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_info(kernel, nodes, gram):
    return {"kernel": kernel.to_json() if not isinstance(kernel, MatrixKernel) else {"kind": "matrix"},
            "nodes": len(nodes), "node_set_id": nodes.id, "diag_policy": gram.diag_policy.to_json()}


# --------------------------------------------------------------------------
# commands

def cmd_capacity(args) -> int:
    from .capacity import compute_capacity

    kernel, nodes, gram = _model(args)
    A = _subset(args.subset, nodes)
    form = FORMULATION_NAMES[args.formulation]
    kw = {"tol": args.tol} if form in ("primal", "dual", "obstacle") else {}
    res = compute_capacity(gram, A, form, **kw)
    out = _outdir(args.output)
    payload = res.to_json()
    payload.update(_model_info(kernel, nodes, gram))
    payload["subset_size"] = len(A)
    if res.checks is not None:
        payload["checks"] = res.checks.to_dict()
    save_json(out / "result.json", payload)
    res.gamma.write_csv(out / "gamma.csv")
    write_potential_csv(out / "potential.csv", res.potential)
    print(f"capacity {res.capacity!r} ({form}, {res.report.status if res.report else 'converged'})")
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_balayage(args) -> int:
    from .balayage import FORMULATIONS, sweep, verify_balayage

    kernel, nodes, gram = _model(args)
    A = _subset(args.subset, nodes)
    mu = _measure(args.measure, len(nodes), gram.node_set_id)
    forms = FORMULATIONS if args.formulation == "all" else (args.formulation,)
    principles = certify(gram, args.trials, seed=args.seed)
    results, ok = {}, True
    first = None
    for f in forms:
        r = sweep(gram, mu, A, f, args.tol)
        rep = verify_balayage(gram, mu, A, r, principles, seed=args.seed)
        results[f] = {**r.to_json(), "verification": rep.to_dict()}
        ok &= r.converged and rep.passed
        first = first or r
    out = _outdir(args.output)
    save_json(out / "balayage.json", {"results": results, "mass_mu": mu.mass, **_model_info(kernel, nodes, gram)})
    first.swept.write_csv(out / "swept.csv")
    print(f"swept mass {first.swept.mass!r} of {mu.mass!r}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_converge(args) -> int:
    from .convergence import run_decreasing, run_increasing

    kernel, nodes, gram = _model(args)
    A = _subset(args.subset, nodes)
    principles = certify(gram, args.trials, seed=args.seed)
    if args.mode == "increasing":
        ex = build_exhaustion(nodes, A, args.stages, "increasing", order=args.order)
        rep = run_increasing(gram, ex, principles)
    else:
        sup = _subset(args.superset, nodes) if args.superset else nodes.full_mask
        ex = build_exhaustion(nodes, A, args.stages, "decreasing", superset=sup)
        rep = run_decreasing(gram, ex.stages, principles)
    out = _outdir(args.output)
    rep.write_csv(out / "convergence.csv")
    save_json(out / "convergence.json", {**rep.to_json(), **_model_info(kernel, nodes, gram)})
    for line in rep.report.lines():
        print(line)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    from .balayage import FORMULATIONS, equilibrium_balayage_consistency, sweep, verify_balayage
    from .capacity import verify_characterizations
    from .convergence import energy_gap_check, potential_monotonicity_check, run_increasing
    from .report import Report

    kernel, nodes, gram = _model(args)
    A = _subset(args.subset, nodes)
    principles = certify(gram, args.trials, seed=args.seed)
    report = Report(args.suite)
    report.data["frostman"] = principles.frostman.to_json()
    report.data["domination"] = principles.domination.to_json()
    if args.suite == "principles":
        for p in (principles.frostman, principles.domination):
            report.add(p.name, p.passed, p.worst_violation, p.tol, f"{p.failures} of {p.trials} trials failed")
    elif args.suite == "characterizations":
        report.extend(verify_characterizations(gram, A, principles))
    elif args.suite == "balayage":
        mu = _measure(args.measure, len(nodes), gram.node_set_id) if args.measure else \
            DiscreteMeasure(np.ones(len(nodes)), gram.node_set_id)
        for f in FORMULATIONS:
            r = sweep(gram, mu, A, f, args.tol)
            report.extend(verify_balayage(gram, mu, A, r, principles, seed=args.seed), f)
        Q = _subset(args.superset, nodes) if args.superset else nodes.full_mask
        if principles.both:
            report.extend(equilibrium_balayage_consistency(gram, A, Q | A), "consistency")
        else:
            report.skip("consistency", "maximum principles not certified")
    elif args.suite == "convergence":
        if len(A) >= 2:
            ex = build_exhaustion(nodes, A, min(args.stages, len(A)), "increasing")
            report.extend(run_increasing(gram, ex, principles).report, "increasing")
            H = ex.stages[0]
            report.extend(energy_gap_check(gram, A, H, principles.frostman.passed), "energy_gap")
            report.extend(potential_monotonicity_check(gram, A, H, principles), "potential")
        else:
            report.skip("increasing", "subset has fewer than two nodes")
    out = _outdir(args.output)
    save_json(out / "report.json", report.to_dict())
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_calibrate(args) -> int:
    from .oracle import self_energy_constant

    kernel = kernel_from_json(_load_json(args.kernel))
    est = self_energy_constant(kernel, samples=args.samples, cell_dim=args.cell_dim, seed=args.seed)
    out = _outdir(args.output)
    save_json(out / "calibration.json", {"kernel": kernel.to_json(), **est.to_json()})
    print(f"self energy {est.value!r} +- {est.stderr!r}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capax", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING", help="logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p):
        p.add_argument("--kernel", help="kernel JSON file")
        p.add_argument("--shape", help="shape JSON file (analytic kernels)")
        p.add_argument("--matrix", help="matrix kernel JSON file (entries)")
        p.add_argument("--resolution", type=int, help="discretization resolution (default per shape)")
        p.add_argument("--subset", help="subset JSON: list, {indices}, {all} or {label}")
        p.add_argument("--tol", type=float, default=1e-9, help="solver KKT tolerance (default: 1e-9)")
        p.add_argument("--seed", type=int, default=0, help="seed for sampling (default: 0)")
        p.add_argument("--samples", type=int, default=1_000_000,
                       help="Monte-Carlo samples for the Gram diagonal (default: 1e6)")
        p.add_argument("-o", "--output", default=".", help="output directory")

    p = sub.add_parser("capacity", help="capacity and equilibrium measure")
    model_args(p)
    p.add_argument("--formulation", choices=sorted(FORMULATION_NAMES), default="dual")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("balayage", help="sweep a measure onto a subset")
    model_args(p)
    p.add_argument("--measure", help="measure JSON ({weights} or {dirac}) or CSV (index,weight)")
    p.add_argument("--formulation", default="all",
                   choices=["all", "projection", "constrained_min_energy", "potential_equation"])
    p.add_argument("--trials", type=int, default=1000, help="principle-check trials (default: 1000)")
    p.set_defaults(func=cmd_balayage)

    p = sub.add_parser("converge", help="capacities along a monotone family")
    model_args(p)
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--mode", choices=["increasing", "decreasing"], default="increasing")
    p.add_argument("--order", choices=["index", "radius"], default="index")
    p.add_argument("--superset", help="subset JSON the decreasing family starts from (default: all)")
    p.add_argument("--trials", type=int, default=1000, help="principle-check trials (default: 1000)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify", help="itemized verification suites")
    model_args(p)
    p.add_argument("--suite", choices=["characterizations", "balayage", "convergence", "principles"], required=True)
    p.add_argument("--measure", help="measure for the balayage suite (default: unit weights)")
    p.add_argument("--superset", help="outer subset for the balayage consistency check (default: all)")
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--trials", type=int, default=1000, help="principle-check trials (default: 1000)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("calibrate", help="Monte-Carlo self energy of the reference cell")
    p.add_argument("--kernel", required=True, help="kernel JSON file")
    p.add_argument("--cell-dim", type=int, help="intrinsic cell dimension (default: kernel dimension)")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=".", help="output directory")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, CapaxError, KeyError, ValueError) as exc:
        print(f"capax: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
