"""JSON and CSV formats for measures, graphs, flows, curves and decompositions.

Every ``*_from_json`` function accepts the parsed object (``dict``/``list``)
and raises :class:`ParseError` when a key is missing or has the wrong shape.
Structural problems with otherwise well formed data (weights not summing to
one, a curve using a missing edge, ...) surface as :class:`ValidationError`
from the constructors.

Infinite table entries are written as ``null``.
"""

import csv
import io
import json
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .errors import ParseError
from .lagrangian import Lagrangian, TableLagrangian
from .metric_measure import DiscreteMeasure, MetricSpace
from .superposition import CurveDecomposition, SolenoidalDecomposition
from .transport import Curve, TimeExpandedGraph, TransportMeasure, VectorField
from .young import TimeGrid, YoungMeasure

__all__ = [
    "load_json",
    "dump_json",
    "atomic_write",
    "measure_to_json",
    "measure_from_json",
    "young_to_json",
    "young_from_json",
    "graph_to_json",
    "graph_from_json",
    "flow_to_json",
    "flow_from_json",
    "curve_to_csv",
    "decomposition_to_json",
    "decomposition_from_json",
    "lagrangian_to_json",
    "lagrangian_from_json",
    "field_from_json",
]


@contextmanager
def _layout(what):
    try:
        yield
    except (KeyError, TypeError, IndexError, SyntaxError) as exc:
        raise ParseError(f"malformed {what}: {exc!r}") from exc
    except ValueError as exc:
        # numpy shape/conversion errors; our own ValidationError is not a ValueError
        raise ParseError(f"malformed {what}: {exc}") from exc


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _clean(obj, digits):
    if isinstance(obj, dict):
        return {str(k): _clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return None
        return float(f"{x:.{digits}g}") if digits else x
    return obj


def dump_json(obj, digits=12):
    """Canonical JSON text: sorted keys, floats rounded to ``digits`` significant digits."""
    return json.dumps(_clean(obj, digits), sort_keys=True, indent=2) + "\n"


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- measures --------------------------------------------------------------------


def measure_to_json(mu):
    torus = mu.space.torus
    return {
        "points": mu.space.points.tolist(),
        "weights": mu.weights.tolist(),
        "torus": None if torus is None else list(torus),
    }


def measure_from_json(obj, space=None):
    """Parse a measure; with ``space`` given, its points must match that space."""
    with _layout("measure"):
        pts = np.array(obj["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        weights = np.array(obj["weights"], dtype=float)
        torus = obj.get("torus")
    if space is None:
        space = MetricSpace.from_points(pts, torus=torus)
    elif pts.shape != space.points.shape or not np.allclose(pts, space.points):
        raise ParseError("measure points do not match the shared space")
    return DiscreteMeasure(space, weights)


def young_to_json(eta):
    g = eta.grid
    return {
        "grid": {"a": g.a, "b": g.b, "n": g.n_steps},
        "slices": [measure_to_json(s) for s in eta.slices],
    }


def young_from_json(obj):
    with _layout("Young measure"):
        grid = TimeGrid(float(obj["grid"]["a"]), float(obj["grid"]["b"]), int(obj["grid"]["n"]))
        raw = obj["slices"]
        first = measure_from_json(raw[0])
        slices = [first] + [measure_from_json(s, first.space) for s in raw[1:]]
    return YoungMeasure(grid, slices)


# -- graphs and flows -------------------------------------------------------------


def graph_to_json(graph):
    g = graph.grid
    return {
        "points": graph.space.points.tolist(),
        "torus": None if graph.space.torus is None else list(graph.space.torus),
        "grid": {"a": g.a, "b": g.b, "n": g.n_steps},
        "edges": [[int(i), int(j)] for i, j in graph.edges if i != j],
    }


def graph_from_json(obj):
    """Graph from points, grid and either ``edges``, ``radius`` or neither (complete graph)."""
    with _layout("graph"):
        pts = np.array(obj["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        space = MetricSpace.from_points(pts, torus=obj.get("torus"))
        grid = TimeGrid(float(obj["grid"]["a"]), float(obj["grid"]["b"]), int(obj["grid"]["n"]))
        if obj.get("edges") is not None:
            edges = [(int(i), int(j)) for i, j in obj["edges"]]
            return TimeExpandedGraph.from_edges(space, grid, edges)
        if obj.get("radius") is not None:
            return TimeExpandedGraph.within_radius(space, grid, float(obj["radius"]))
    return TimeExpandedGraph.full(space, grid)


def flow_to_json(eta):
    triplets = [
        {"k": int(k), "i": int(i), "j": int(j), "m": float(eta.mass[k, i, j])}
        for k, i, j in np.argwhere(eta.mass > 0)
    ]
    return {"graph": graph_to_json(eta.graph), "mass": triplets}


def flow_from_json(obj, cls=TransportMeasure):
    with _layout("flow"):
        graph = graph_from_json(obj["graph"])
        mass = np.zeros((graph.n_steps, graph.size, graph.size))
        for e in obj["mass"]:
            mass[int(e["k"]), int(e["i"]), int(e["j"])] += float(e["m"])
    return cls(graph, mass)


def curve_to_csv(curve):
    """Rows ``t, x1..xd, v1..vd``; the last row repeats the final velocity."""
    g = curve.graph
    d = g.space.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{c + 1}" for c in range(d)] + [f"v{c + 1}" for c in range(d)])
    pos = curve.positions
    vel = curve.velocities
    for k, t in enumerate(g.grid.times):
        v = vel[min(k, len(vel) - 1)]
        w.writerow([repr(float(t))] + [repr(float(x)) for x in pos[k]] + [repr(float(x)) for x in v])
    return buf.getvalue()


# -- decompositions -------------------------------------------------------------


def decomposition_to_json(dec):
    if isinstance(dec, SolenoidalDecomposition):
        n = dec.graph.n_steps
        return {
            "cycles": [
                {"nodes": list(c), "weight": w, "period": len(c) // n} for c, w in dec.items
            ]
        }
    return {"curves": [{"nodes": list(c.nodes), "weight": w} for c, w in dec.items]}


def decomposition_from_json(obj, graph):
    with _layout("decomposition"):
        if "cycles" in obj:
            items = tuple((tuple(c["nodes"]), float(c["weight"])) for c in obj["cycles"])
            return SolenoidalDecomposition(graph, items)
        items = tuple((Curve(graph, c["nodes"]), float(c["weight"])) for c in obj["curves"])
    return CurveDecomposition(graph, items)


# -- Lagrangians and fields -----------------------------------------------------


def lagrangian_to_json(L):
    kind = getattr(L, "kind", None)
    if kind == "quadratic":
        return {"kind": "quadratic", "coef": L.coef}
    if kind == "expr":
        return {
            "kind": "expr",
            "expr": L.expr,
            "fiberwise_convex": L.fiberwise_convex,
            "superlinear_constant": L.superlinear_constant,
        }
    if kind == "table":
        table = np.where(np.isfinite(L.table), L.table, np.nan)
        return {"kind": "table", "table": [[[None if np.isnan(x) else x for x in row] for row in step] for step in table]}
    raise ParseError("only quadratic, expr and table Lagrangians can be serialized")


def lagrangian_from_json(obj, graph=None):
    with _layout("lagrangian"):
        kind = obj["kind"]
        if kind == "quadratic":
            return Lagrangian.quadratic(float(obj.get("coef", 0.5)))
        if kind == "expr":
            c = obj.get("superlinear_constant")
            return Lagrangian.from_expression(
                str(obj["expr"]),
                fiberwise_convex=bool(obj.get("fiberwise_convex", False)),
                superlinear_constant=None if c is None else float(c),
            )
        if kind == "table":
            if graph is None:
                raise ParseError("a table Lagrangian needs the problem graph")
            table = np.array(obj["table"], dtype=float)  # null -> nan
            table = np.where(np.isnan(table), np.inf, table)
            return TableLagrangian(graph, table)
    raise ParseError(f"unknown Lagrangian kind {kind!r}")


def field_from_json(obj, graph):
    """Vector field values ``[n][N][d]`` with ``null`` where undefined."""
    with _layout("vector field"):
        raw = obj["field"]
        values = np.array(
            [[[np.nan] * graph.space.dim if v is None else v for v in step] for step in raw],
            dtype=float,
        )
    return VectorField(graph, values)
