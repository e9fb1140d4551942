"""Command-line entry point: ``dyntransport <command> [options]``.

Every command reads one JSON input (``--input``) or, without it, draws a
random instance from ``--seed``. Results land in ``--output-dir``:

* ``report.json`` -- scalars plus a ``provenance`` block, canonical and
  byte-stable for a fixed seed and configuration;
* structured outputs (flows, curves, decompositions) and plot-ready CSV.

Exit status: 0 on success, 2 on unreadable input, 3 on infeasibility,
4 on validation failures. Failures also write ``error.json``.
"""

import argparse
import hashlib
import json
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy

from . import __version__
from .errors import InfeasibilityError, ParseError, TransportError
from .instances import (
    line_graph,
    random_circulation,
    random_flow,
    random_graph,
    random_measure,
    random_ode_instance,
    random_space,
    random_table_lagrangian,
)
from .io import (
    atomic_write,
    curve_to_csv,
    decomposition_to_json,
    dump_json,
    field_from_json,
    flow_from_json,
    flow_to_json,
    graph_from_json,
    graph_to_json,
    lagrangian_from_json,
    lagrangian_to_json,
    load_json,
    measure_from_json,
    measure_to_json,
)
from .lagrangian import Lagrangian
from .metric_measure import DiscreteMeasure, kr_distance, kr_dual
from .solvers import certify_duality, dyn_ot, tonelli_dp
from .superposition import cycle_decompose, decompose_ode, holonomic_approximate, superpose
from .transport import ClosedMeasure, TransportMeasure, marginal_path

COMMANDS = ("kr", "tonelli", "dynot", "certify", "superpose", "ode", "cycles", "holonomic")
EXIT_PARSE, EXIT_INFEASIBLE, EXIT_INVALID = 2, 3, 4


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


def build_parser():
    p = argparse.ArgumentParser(prog="dyntransport", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="JSON problem file; a random instance is drawn when omitted")
    p.add_argument("--output-dir", default="out", help="directory for report and outputs")
    p.add_argument("--seed", type=int, default=0, help="seed for random instances")
    p.add_argument("--tol", type=float, default=1e-10, help="conservation tolerance")
    p.add_argument("--q", type=_int_list, default=[2, 4, 8, 16], help="holonomic sweep, e.g. 2,4,8")
    p.add_argument("--refine", type=_int_list, default=None,
                   help="tonelli refinement sweep over step counts, e.g. 4,8,16")
    return p


def _threads():
    try:
        return max(1, int(os.environ.get("TM_THREADS", "1")))
    except ValueError:
        return 1


def _sweep(func, values):
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(func, values))


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else (f"{v:.12g}" if isinstance(v, float) else str(v))
                              for v in row))
    return "\n".join(lines) + "\n"


# -- random instances -------------------------------------------------------------


def _random_lagrangian(rng):
    a = round(float(rng.uniform(0.25, 1.0)), 6)
    b = round(float(rng.uniform(0.0, 0.5)), 6)
    c = round(float(rng.uniform(1.0, 4.0)), 6)
    expr = f"{a}*sum(v**2, axis=-1) + {b}*cos({c}*x[..., 0] + t)"
    return Lagrangian.from_expression(expr, fiberwise_convex=True, superlinear_constant=a)


def _random_problem(command, rng):
    if command == "kr":
        space = random_space(rng, 6, dim=2)
        return {"mu": measure_to_json(random_measure(rng, space)),
                "nu": measure_to_json(random_measure(rng, space, 3))}
    if command in ("tonelli", "dynot"):
        g = random_graph(rng, 6, 4, dim=2)
        prob = {"graph": graph_to_json(g), "lagrangian": lagrangian_to_json(_random_lagrangian(rng))}
        if command == "tonelli":
            x_i, x_f = (int(v) for v in rng.integers(g.size, size=2))
            prob["boundary"] = {"x_i": x_i, "x_f": x_f}
        else:
            prob["boundary"] = {"mu_i": random_measure(rng, g.space, 3).weights.tolist(),
                                "mu_f": random_measure(rng, g.space, 3).weights.tolist()}
        return prob
    if command == "certify":
        g = random_graph(rng, 5, 3)
        L = random_table_lagrangian(rng, g, low=-1.0, high=1.0)
        return {"graph": graph_to_json(g), "lagrangian": lagrangian_to_json(L)}
    if command == "superpose":
        return flow_to_json(random_flow(rng, random_graph(rng, 6, 4, dim=2), n_paths=6))
    if command == "ode":
        g = random_graph(rng, 6, 4, dim=2)
        V, path = random_ode_instance(rng, g)
        field = [[None if np.any(np.isnan(v)) else v.tolist() for v in step] for step in V.values]
        return {"graph": graph_to_json(g), "field": field, "path": [mu.weights.tolist() for mu in path]}
    g = random_graph(rng, 5, 3, density=0.5, dim=2)
    return flow_to_json(random_circulation(rng, g))


# -- commands ---------------------------------------------------------------------


def _run_kr(prob, args):
    mu = measure_from_json(prob["mu"])
    nu = measure_from_json(prob["nu"], mu.space)
    value, plan = kr_distance(mu, nu)
    dual, f = kr_dual(mu, nu)
    pairs = [{"i": int(i), "j": int(j), "m": float(plan.mass[i, j])}
             for i, j in np.argwhere(plan.mass > 0)]
    report = {"distance": value, "dual_value": dual, "duality_gap": abs(value - dual)}
    outputs = {
        "coupling.json": dump_json({"mass": pairs}),
        "potential.csv": _csv(["node", "f"], [(i, float(v)) for i, v in enumerate(f.values)]),
    }
    return report, outputs


def _problem_parts(prob):
    graph = graph_from_json(prob["graph"])
    L = lagrangian_from_json(prob["lagrangian"], graph)
    return graph, L


def _refinement(L, sizes):
    def one(n):
        g = line_graph(n * n + 1, n)
        x_f = int(round(0.7 * n * n))
        _, value, _ = tonelli_dp(L, 0, x_f, g)
        exact = None
        if getattr(L, "kind", None) == "quadratic":
            exact = L.coef * float(g.space.points[x_f, 0]) ** 2
        return n, value, exact

    rows = []
    for n, value, exact in _sweep(one, sizes):
        rows.append((n, value, exact, None if exact is None else value - exact))
    return rows


def _run_tonelli(prob, args):
    graph, L = _problem_parts(prob)
    b = prob["boundary"]
    curve, value, u = tonelli_dp(L, int(b["x_i"]), int(b["x_f"]), graph)
    report = {"action": value, "nodes": list(curve.nodes),
              "recursion_residual": u.recursion_residual(L)}
    outputs = {"curve.csv": curve_to_csv(curve)}
    if args.refine:
        if getattr(L, "kind", None) == "table":
            raise ParseError("refinement needs a Lagrangian defined off the input graph")
        rows = _refinement(L, args.refine)
        report["refinement"] = [{"n": n, "action": a, "exact": e, "error": d} for n, a, e, d in rows]
        outputs["refinement.csv"] = _csv(["n", "action", "exact", "error"], rows)
    return report, outputs


def _run_dynot(prob, args):
    graph, L = _problem_parts(prob)
    b = prob["boundary"]
    mu_i = DiscreteMeasure(graph.space, b["mu_i"])
    mu_f = DiscreteMeasure(graph.space, b["mu_f"])
    eta, value = dyn_ot(L, mu_i, mu_f, graph)
    path = marginal_path(eta)
    report = {
        "action": value,
        "kirchhoff_residual": eta.kirchhoff_residual(),
        "boundary_residual": max(float(np.abs(path[0].weights - mu_i.weights).max()),
                                 float(np.abs(path[-1].weights - mu_f.weights).max())),
    }
    marg = [[k] + path[k].weights.tolist() for k in range(len(path))]
    outputs = {
        "flow.json": dump_json(flow_to_json(eta)),
        "marginals.csv": _csv(["k"] + [f"w{i}" for i in range(graph.size)], marg),
    }
    return report, outputs


def _run_certify(prob, args):
    graph, L = _problem_parts(prob)
    dp_min, lp_min = certify_duality(L, graph)
    return {"dp_min": dp_min, "lp_min": lp_min, "duality_gap": abs(dp_min - lp_min)}, {}


def _decomposition_report(dec, eta):
    path = marginal_path(eta)
    marg = max(kr_distance(dec.evaluate_at(k), path[k])[0] for k in range(len(path)))
    return {
        "n_curves": len(dec),
        "reconstruction_residual": float(np.abs(dec.reconstruct() - eta.mass).max()),
        "weight_sum": float(dec.weights.sum()),
        "marginal_kr_max": marg,
    }


def _run_superpose(prob, args):
    eta = flow_from_json(prob)
    dec = superpose(eta, tol=args.tol)
    return _decomposition_report(dec, eta), {"decomposition.json": dump_json(decomposition_to_json(dec))}


def _run_ode(prob, args):
    graph = graph_from_json(prob["graph"])
    V = field_from_json(prob, graph)
    path = [DiscreteMeasure(graph.space, w) for w in prob["path"]]
    dec = decompose_ode(V, path, tol=args.tol)
    eta = TransportMeasure(graph, dec.reconstruct())
    return _decomposition_report(dec, eta), {"decomposition.json": dump_json(decomposition_to_json(dec))}


def _run_cycles(prob, args):
    eta = flow_from_json(prob, ClosedMeasure)
    sol = cycle_decompose(eta, tol=args.tol)
    rec = sol.reconstruct()
    report = {
        "n_cycles": len(sol),
        "periods": sol.periods,
        "reconstruction_residual": float(np.abs(rec - eta.mass).max()),
        "shift_residual": float(np.abs(sol.shift().reconstruct() - rec).max()),
    }
    return report, {"cycles.json": dump_json(decomposition_to_json(sol))}


def _run_holonomic(prob, args):
    eta = flow_from_json(prob, ClosedMeasure)
    qs = sorted(set(args.q))
    results = _sweep(lambda q: holonomic_approximate(eta, q), qs)
    rows = [(q, h.kr_error, h.error_bound, h.period, h.repeats) for q, h in zip(qs, results)]
    last = results[-1]
    report = {
        "metric": "|dk|/n + |dx| + |dv|",
        "sweep": [{"q": q, "kr_error": e, "error_bound": b, "period": T, "repeats": r}
                  for q, e, b, T, r in rows],
        "counts": list(last.counts),
        "nonincreasing": bool(all(a[1] >= b[1] for a, b in zip(rows, rows[1:]))),
    }
    outputs = {
        "holonomic.csv": _csv(["q", "kr_error", "error_bound", "period", "repeats"], rows),
        "curve.json": dump_json({"nodes": list(last.curve.nodes), "period": last.period}),
        "cycles.json": dump_json(decomposition_to_json(last.decomposition)),
    }
    return report, outputs


RUNNERS = {
    "kr": _run_kr,
    "tonelli": _run_tonelli,
    "dynot": _run_dynot,
    "certify": _run_certify,
    "superpose": _run_superpose,
    "ode": _run_ode,
    "cycles": _run_cycles,
    "holonomic": _run_holonomic,
}


def _provenance(args, prob):
    config = {
        "command": args.command,
        "seed": None if args.input else args.seed,
        "tol": args.tol,
        "q": args.q if args.command == "holonomic" else None,
        "refine": args.refine,
        "problem": prob,
    }
    digest = hashlib.sha256(dump_json(config).encode()).hexdigest()
    return {
        "config_hash": digest,
        "seed": args.seed,
        "input": os.path.basename(args.input) if args.input else None,
        "versions": {
            "dyntransport": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _exit_code(exc):
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, InfeasibilityError):
        return EXIT_INFEASIBLE
    return EXIT_INVALID


def run(args):
    """Execute one command; returns the exit status."""
    try:
        if args.input:
            prob = load_json(args.input)
        else:
            prob = _random_problem(args.command, np.random.default_rng(args.seed))
        try:
            report, outputs = RUNNERS[args.command](prob, args)
        except (KeyError, TypeError, IndexError) as exc:
            raise ParseError(f"malformed {args.command} problem: {exc!r}") from exc
    except TransportError as exc:
        code = _exit_code(exc)
        err = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
        if getattr(exc, "offenders", None):
            err["error"]["offenders"] = [list(o) for o in exc.offenders]
        text = json.dumps(err, sort_keys=True)
        print(text, file=sys.stderr)
        try:
            atomic_write(os.path.join(args.output_dir, "error.json"), text + "\n")
        except OSError:
            pass
        return code

    report = dict(report, command=args.command, provenance=_provenance(args, prob))
    if not args.input:
        outputs["input.json"] = dump_json(prob, digits=None)
    for name, text in outputs.items():
        atomic_write(os.path.join(args.output_dir, name), text)
    atomic_write(os.path.join(args.output_dir, "report.json"), dump_json(report))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
