"""Seeded random instances for tests, demos and the command line.

Every generator takes a ``numpy.random.Generator`` so a seed fully
determines the instance.
"""

import numpy as np

from .lagrangian import Lagrangian, TableLagrangian
from .metric_measure import DiscreteMeasure, MetricSpace
from .superposition import SolenoidalDecomposition
from .transport import (
    ClosedMeasure,
    Curve,
    GeneralizedCurve,
    TimeExpandedGraph,
    TransportMeasure,
    VectorField,
)
from .young import TimeGrid


def random_space(rng, n_points, dim=1, torus=None):
    if torus is not None:
        pts = rng.uniform(0, 1, size=(n_points, dim)) * np.asarray(torus, dtype=float)
    else:
        pts = rng.uniform(0, 1, size=(n_points, dim))
    return MetricSpace.from_points(pts, torus=torus)


def random_measure(rng, space, support_size=None):
    size = space.size if support_size is None else support_size
    support = rng.choice(space.size, size=size, replace=False)
    w = np.zeros(space.size)
    w[support] = rng.uniform(0.05, 1.0, size=size)
    w /= w.sum()
    return DiscreteMeasure(space, w)


def random_graph(rng, n_nodes, n_steps, density=0.6, dim=1, a=0.0, b=1.0):
    """Random point set with a random edge set; strongly connected through a ring."""
    space = random_space(rng, n_nodes, dim)
    adj = rng.uniform(size=(n_nodes, n_nodes)) < density
    ring = np.roll(np.eye(n_nodes, dtype=bool), 1, axis=1)
    adj |= ring
    return TimeExpandedGraph(space, TimeGrid(a, b, n_steps), adj)


def line_graph(n_nodes, n_steps, length=1.0, radius=None, a=0.0, b=1.0):
    """Equally spaced points on ``[0, length]``; edges within ``radius`` (all if ``None``)."""
    space = MetricSpace.from_points(np.linspace(0.0, length, n_nodes)[:, None])
    grid = TimeGrid(a, b, n_steps)
    if radius is None:
        return TimeExpandedGraph.full(space, grid)
    return TimeExpandedGraph.within_radius(space, grid, radius)


def random_table_lagrangian(rng, graph, low=0.0, high=1.0, integer=False):
    shape = (graph.n_steps, graph.size, graph.size)
    if integer:
        table = rng.integers(int(low), int(high) + 1, size=shape).astype(float)
    else:
        table = rng.uniform(low, high, size=shape)
    return TableLagrangian(graph, table)


def random_convex_lagrangian(rng, dim=1, strict=True, n_pieces=4):
    """``a|v|^2 + max_p (s_p . v + c_p) + h(x)``: convex in ``v``, strictly if ``strict``."""
    a = rng.uniform(0.2, 1.0) if strict else 0.0
    slopes = rng.normal(size=(n_pieces, dim))
    offsets = rng.normal(size=n_pieces)
    freq = rng.normal(size=dim)

    def func(t, x, v):
        v = np.asarray(v)
        pl = (v[..., None, :] * slopes).sum(axis=-1) + offsets
        return a * (v**2).sum(axis=-1) + pl.max(axis=-1) + np.cos(x @ freq + t)

    return Lagrangian(func, fiberwise_convex=True, name="random_convex")


def random_curve(rng, graph, start=None):
    node = int(rng.integers(graph.size)) if start is None else start
    nodes = [node]
    for _ in range(graph.n_steps):
        node = int(rng.choice(np.flatnonzero(graph.adjacency[node])))
        nodes.append(node)
    return Curve(graph, nodes)


def random_flow(rng, graph, n_paths=5):
    """Convex combination of random paths: a generic valid transport measure."""
    w = rng.uniform(0.05, 1.0, size=n_paths)
    w /= w.sum()
    n = graph.n_steps
    mass = np.zeros((n, graph.size, graph.size))
    for weight in w:
        c = random_curve(rng, graph)
        for k in range(n):
            mass[k, c.nodes[k], c.nodes[k + 1]] += weight / n
    return TransportMeasure(graph, mass)


def random_closed_walk(rng, graph, period, tries=1000):
    length = period * graph.n_steps
    for _ in range(tries):
        c = random_curve(rng, graph)
        nodes = list(c.nodes[:-1])
        node = c.nodes[-1]
        while len(nodes) < length - 1:
            nodes.append(node)
            node = int(rng.choice(np.flatnonzero(graph.adjacency[node])))
        nodes.append(node)
        nodes = nodes[:length]
        if graph.adjacency[nodes[-1], nodes[0]]:
            return tuple(nodes)
    raise RuntimeError("could not close a random walk on this graph")


def random_circulation(rng, graph, n_cycles=3, max_period=2):
    items = []
    w = rng.uniform(0.05, 1.0, size=n_cycles)
    w /= w.sum()
    for weight in w:
        period = int(rng.integers(1, max_period + 1))
        items.append((random_closed_walk(rng, graph, period), weight))
    mass = SolenoidalDecomposition(graph, tuple(items)).reconstruct()
    return ClosedMeasure(graph, mass)


def random_generalized_curve(rng, graph, dirac=False, n_atoms=3):
    c = random_curve(rng, graph)
    fibers = []
    for v in c.velocities:
        if dirac:
            fibers.append((v[None, :], np.ones(1)))
            continue
        w = rng.uniform(0.1, 1.0, size=n_atoms)
        w /= w.sum()
        vecs = v + rng.normal(scale=2.0, size=(n_atoms, graph.space.dim))
        vecs += v - w @ vecs
        fibers.append((vecs, w))
    return GeneralizedCurve(graph, c.nodes, tuple(fibers))


def random_ode_instance(rng, graph, support_size=3):
    """A representable field and the density path it transports."""
    n = graph.n_steps
    mu = random_measure(rng, graph.space, support_size).weights
    path = [mu]
    values = np.full((n, graph.size, graph.space.dim), np.nan)
    for k in range(n):
        nxt = np.zeros(graph.size)
        for i in range(graph.size):
            j = int(rng.choice(np.flatnonzero(graph.adjacency[i])))
            values[k, i] = graph.velocities[i, j]
            nxt[j] += path[-1][i]
        path.append(nxt)
    field = VectorField(graph, values)
    return field, [DiscreteMeasure(graph.space, p) for p in path]
