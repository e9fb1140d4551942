"""Transport measures as edge flows on a time-expanded graph.

Nodes of the graph are the points of a :class:`MetricSpace` repeated at the
times of a :class:`TimeGrid`. An edge ``(i, j)`` at step ``k`` stands for the
tangent vector ``(x_i, v_ij)`` with ``v_ij = (x_j - x_i) / dt``, so a flow on
these edges is a measure on time x position x velocity. Every slice carries
mass ``1/n_steps`` (the time marginal is the normalized Lebesgue measure) and
flow is conserved at interior nodes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, ValidationError
from .lagrangian import Lagrangian
from .metric_measure import DiscreteMeasure, MetricSpace, kr_distance, torus_displacement
from .young import TimeGrid, YoungMeasure

MASS_TOL = 1e-12
VELOCITY_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeExpandedGraph:
    """Allowed moves between points, identical at every time step.

    ``adjacency[i, j]`` says whether the move ``i -> j`` may be taken in one
    step; self-loops are always added.
    """

    space: MetricSpace
    grid: TimeGrid
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        n = self.space.size
        if adj.shape != (n, n):
            raise ValidationError(f"adjacency shape {adj.shape} != ({n}, {n})")
        np.fill_diagonal(adj, True)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        pts = self.space.points
        disp = torus_displacement(pts[:, None, :], pts[None, :, :], self.space.torus)
        object.__setattr__(self, "velocities", _frozen(disp / self.grid.dt))

    @classmethod
    def full(cls, space, grid):
        return cls(space, grid, np.ones((space.size, space.size), dtype=bool))

    @classmethod
    def within_radius(cls, space, grid, radius):
        return cls(space, grid, space.dist <= radius + 1e-12)

    @classmethod
    def from_edges(cls, space, grid, edges):
        adj = np.zeros((space.size, space.size), dtype=bool)
        for i, j in edges:
            adj[i, j] = True
        return cls(space, grid, adj)

    @property
    def n_steps(self):
        return self.grid.n_steps

    @property
    def size(self):
        return self.space.size

    @property
    def edges(self):
        return [tuple(e) for e in np.argwhere(self.adjacency)]

    def same_as(self, other):
        return self is other or (
            self.grid == other.grid
            and self.space.same_as(other.space)
            and np.array_equal(self.adjacency, other.adjacency)
        )

    def node_at(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        delta = torus_displacement(x, self.space.points, self.space.torus)
        hits = np.flatnonzero(np.linalg.norm(delta, axis=-1) <= tol)
        if len(hits) == 0:
            raise ValidationError(f"no graph node at {x}")
        return int(hits[0])


def _check_graph(a, b):
    if not a.same_as(b):
        raise ConfigurationError("objects live on different time-expanded graphs")


class TransportMeasure:
    """Edge masses ``mass[k, i, j]`` on a :class:`TimeExpandedGraph`.

    Construction checks nonnegativity, that mass sits on allowed edges,
    that every slice has mass ``1/n_steps`` and interior conservation.
    ``validate=False`` skips the last two checks (used to probe the
    continuity identity with broken flows).
    """

    def __init__(self, graph, mass, validate=True):
        m = np.array(mass, dtype=float)
        shape = (graph.n_steps, graph.size, graph.size)
        if m.shape != shape:
            raise ValidationError(f"mass shape {m.shape} != {shape}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValidationError("edge masses must be finite and nonnegative")
        if np.any(m[:, ~graph.adjacency] > 0):
            raise ValidationError("mass on an edge the graph does not allow")
        m.setflags(write=False)
        self.graph = graph
        self.mass = m
        if validate:
            self._validate()

    def _validate(self):
        n = self.graph.n_steps
        slice_err = np.abs(self.mass.sum(axis=(1, 2)) - 1.0 / n).max()
        if slice_err > MASS_TOL:
            raise ValidationError(f"slice mass differs from 1/n by {slice_err:.3e}")
        err = self.kirchhoff_residual()
        if err > MASS_TOL:
            raise ValidationError(f"flow not conserved (max residual {err:.3e})")

    def kirchhoff_residual(self):
        """Largest ``|in(k, i) - out(k, i)|`` over interior times."""
        if self.graph.n_steps < 2:
            return 0.0
        inflow = self.mass[:-1].sum(axis=1)
        outflow = self.mass[1:].sum(axis=2)
        return float(np.abs(inflow - outflow).max())

    def __repr__(self):
        g = self.graph
        return f"{type(self).__name__}(steps={g.n_steps}, nodes={g.size}, edges={self.n_support})"

    @property
    def n_support(self):
        return int(np.count_nonzero(self.mass))

    @property
    def outgoing(self):
        """``out[k, i] = n * sum_j mass[k, i, j]``: position marginal at ``t_k`` (k < n)."""
        return self.graph.n_steps * self.mass.sum(axis=2)

    @property
    def incoming(self):
        """``in[k, j] = n * sum_i mass[k-1, i, j]`` for ``k = 1..n`` (row 0 is ``t_1``)."""
        return self.graph.n_steps * self.mass.sum(axis=1)

    def atoms(self):
        """``(k, i, j, m)`` for every edge carrying mass."""
        ks, iis, js = np.nonzero(self.mass)
        return [
            (int(k), int(i), int(j), float(self.mass[k, i, j]))
            for k, i, j in zip(ks, iis, js)
        ]

    def mix(self, other, s):
        """``s * self + (1 - s) * other``."""
        _check_graph(self.graph, other.graph)
        return type(self)(self.graph, s * self.mass + (1 - s) * other.mass)

    def boundary(self):
        """``(mu_a, mu_b)``: the class ``T_{mu_a}^{mu_b}`` this measure belongs to."""
        path = marginal_path(self)
        return path[0], path[-1]


class ClosedMeasure(TransportMeasure):
    """A transport measure on periodic time: conservation also holds from
    the last step back to the first, so the initial and final marginals agree.
    """

    def kirchhoff_residual(self):
        inflow = self.mass.sum(axis=1)
        outflow = np.roll(self.mass, -1, axis=0).sum(axis=2)
        return float(np.abs(inflow - outflow).max())


@dataclass(frozen=True, eq=False)
class Curve:
    """A path ``i_0, ..., i_n`` through the graph, one node per grid time."""

    graph: TimeExpandedGraph
    nodes: tuple

    def __post_init__(self):
        nodes = tuple(int(i) for i in self.nodes)
        if len(nodes) != self.graph.n_steps + 1:
            raise ValidationError(
                f"a curve needs {self.graph.n_steps + 1} nodes, got {len(nodes)}"
            )
        for k in range(len(nodes) - 1):
            if not self.graph.adjacency[nodes[k], nodes[k + 1]]:
                raise ValidationError(f"step {k}: {nodes[k]} -> {nodes[k + 1]} is not an edge")
        object.__setattr__(self, "nodes", nodes)

    @property
    def positions(self):
        return self.graph.space.points[list(self.nodes)]

    @property
    def velocities(self):
        v = self.graph.velocities
        return np.array([v[i, j] for i, j in zip(self.nodes[:-1], self.nodes[1:])])

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True, eq=False)
class GeneralizedCurve:
    """A path whose velocity at step ``k`` is spread over ``fibers[k]``.

    Each fiber is ``(vectors, weights)``: an ``(m, d)`` array of velocities
    and ``m`` probability weights, whose barycenter must equal the velocity
    of the path on that step.
    """

    graph: TimeExpandedGraph
    nodes: tuple
    fibers: tuple

    def __post_init__(self):
        path = Curve(self.graph, self.nodes)
        object.__setattr__(self, "nodes", path.nodes)
        if len(self.fibers) != self.graph.n_steps:
            raise ValidationError("one velocity fiber per step is required")
        fibers = []
        for k, (vecs, w) in enumerate(self.fibers):
            vecs = _frozen(np.reshape(vecs, (len(w), self.graph.space.dim)))
            w = _frozen(w)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValidationError(f"step {k}: fiber weights are not a probability")
            bary = w @ vecs
            target = self.graph.velocities[path.nodes[k], path.nodes[k + 1]]
            if np.abs(bary - target).max() > 1e-10 * max(1.0, np.abs(target).max()):
                raise ValidationError(f"step {k}: fiber barycenter {bary} != path velocity {target}")
            fibers.append((vecs, w))
        object.__setattr__(self, "fibers", tuple(fibers))

    @classmethod
    def from_curve(cls, curve):
        """The generalized curve with Dirac fibers at the path velocities."""
        fibers = tuple((v[None, :], np.ones(1)) for v in curve.velocities)
        return cls(curve.graph, curve.nodes, fibers)

    @property
    def curve(self):
        return Curve(self.graph, self.nodes)

    @property
    def is_dirac(self):
        return all(np.count_nonzero(w) == 1 for _, w in self.fibers)


@dataclass(frozen=True, eq=False)
class VectorField:
    """``values[k, i]``: velocity at ``(t_k, x_i)``; NaN where undefined."""

    graph: TimeExpandedGraph
    values: np.ndarray

    def __post_init__(self):
        shape = (self.graph.n_steps, self.graph.size, self.graph.space.dim)
        v = _frozen(self.values)
        if v.shape != shape:
            raise ValidationError(f"field shape {v.shape} != {shape}")
        object.__setattr__(self, "values", v)

    def defined(self):
        return ~np.any(np.isnan(self.values), axis=-1)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Values ``g(t_k, x_i)`` for ``k = 0..n`` on every node."""

    __test__ = False  # not a pytest class

    graph: TimeExpandedGraph
    values: np.ndarray

    def __post_init__(self):
        g = _frozen(self.values)
        shape = (self.graph.n_steps + 1, self.graph.size)
        if g.shape != shape:
            raise ValidationError(f"test function shape {g.shape} != {shape}")
        if not np.all(np.isfinite(g)):
            raise ValidationError("test function values must be finite")
        object.__setattr__(self, "values", g)

    @classmethod
    def from_callable(cls, graph, g):
        times = graph.grid.times
        pts = graph.space.points
        return cls(graph, [[g(t, x) for x in pts] for t in times])


@dataclass(frozen=True)
class ProjectionCertificate:
    """Why a barycentric projection is not a transport measure on the graph.

    ``off_grid``: ``(k, i)`` whose mean velocity does not reach a node in one step.
    ``unbalanced``: ``(k, j)`` where the projected flow breaks conservation.
    ``mass``: the projected edge masses when every mean velocity is on the grid.
    """

    off_grid: tuple
    unbalanced: tuple
    mass: np.ndarray | None = None


def continuity_residual(eta, g, mu_a=None, mu_b=None):
    """Discrete weak continuity equation with boundary terms.

    ``sum_k sum_ij n m_k(i,j) (g(t_{k+1}, x_j) - g(t_k, x_i)) - (<g_b, mu_b> - <g_a, mu_a>)``.
    The boundary measures default to the marginals of ``eta`` at ``a`` and ``b``.
    """
    if isinstance(g, TestFunction):
        _check_graph(eta.graph, g.graph)
        gv = g.values
    else:
        gv = np.asarray(g, dtype=float)
    n = eta.graph.n_steps
    if gv.shape != (n + 1, eta.graph.size):
        raise ConfigurationError("test function does not match the graph")
    m = eta.mass
    bulk = n * (
        np.einsum("kij,kj->", m, gv[1:]) - np.einsum("kij,ki->", m, gv[:-1])
    )
    wa = n * m[0].sum(axis=1) if mu_a is None else _weights_on(mu_a, eta.graph)
    wb = n * m[-1].sum(axis=0) if mu_b is None else _weights_on(mu_b, eta.graph)
    return float(bulk - (gv[-1] @ wb - gv[0] @ wa))


def _weights_on(mu, graph):
    if isinstance(mu, DiscreteMeasure):
        if not mu.space.same_as(graph.space):
            raise ConfigurationError("boundary measure lives on another space")
        return mu.weights
    return np.asarray(mu, dtype=float)


def marginal_path(eta, side="out"):
    """Position marginals ``mu_{t_0}, ..., mu_{t_n}``.

    ``side="out"`` reads ``mu_{t_k}`` from the mass leaving ``t_k`` (the last
    one from mass arriving at ``t_n``); ``side="in"`` reads every ``k >= 1``
    from arriving mass. For a valid flow the two agree.
    """
    space = eta.graph.space
    out = eta.outgoing
    inc = eta.incoming
    if side == "out":
        rows = list(out) + [inc[-1]]
    elif side == "in":
        rows = [out[0]] + list(inc)
    else:
        raise ValueError("side must be 'out' or 'in'")
    return [DiscreteMeasure(space, r) for r in rows]


def curve_embed(gamma):
    """The transport measure carried by a single path: mass ``1/n`` per edge."""
    g = gamma.graph
    n = g.n_steps
    mass = np.zeros((n, g.size, g.size))
    for k in range(n):
        mass[k, gamma.nodes[k], gamma.nodes[k + 1]] += 1.0 / n
    return TransportMeasure(g, mass)


def barycentric_project(eta, tol=VELOCITY_TOL):
    """Mean outgoing velocity at every loaded node, and the flow it generates.

    Returns ``(field, projected)``. ``projected`` is a :class:`TransportMeasure`
    when each mean velocity leads to a node and the resulting flow is
    conserved, and a :class:`ProjectionCertificate` otherwise.
    """
    g = eta.graph
    n = g.n_steps
    out = eta.mass.sum(axis=2)
    values = np.full((n, g.size, g.space.dim), np.nan)
    loaded = out > 0
    weighted = np.einsum("kij,ijd->kid", eta.mass, g.velocities)
    values[loaded] = weighted[loaded] / out[loaded][:, None]
    field = VectorField(g, values)

    projected = np.zeros_like(eta.mass)
    off_grid = []
    for k, i in zip(*np.nonzero(loaded)):
        target = _node_reached(g, i, values[k, i], tol)
        if target is None:
            off_grid.append((int(k), int(i)))
        else:
            projected[k, i, target] = out[k, i]
    if off_grid:
        return field, ProjectionCertificate(tuple(off_grid), ())

    inflow = projected[:-1].sum(axis=1)
    outflow = projected[1:].sum(axis=2)
    bad = np.argwhere(np.abs(inflow - outflow) > MASS_TOL)
    if len(bad):
        unbalanced = tuple((int(k) + 1, int(j)) for k, j in bad)
        projected.setflags(write=False)
        return field, ProjectionCertificate((), unbalanced, projected)
    return field, type(eta)(g, projected)


def _node_reached(graph, i, v, tol):
    diff = np.abs(graph.velocities[i] - v).max(axis=-1)
    hits = np.flatnonzero((diff <= tol * (1.0 + np.abs(v).max())) & graph.adjacency[i])
    return int(hits[0]) if len(hits) else None


def jensen_reduce(Gamma, L):
    """``(curve_action, generalized_action)`` for a fiberwise convex ``L``.

    The curve action uses the barycentric (path) velocity, so Jensen's
    inequality gives ``generalized_action >= curve_action``.
    """
    if not getattr(L, "fiberwise_convex", False):
        raise ContractError("jensen_reduce needs a Lagrangian flagged fiberwise convex")
    return action(Gamma.curve, L), action(Gamma, L)


def action(obj, L):
    """Time-averaged integral of ``L`` against a curve, generalized curve or flow.

    Edges without mass never contribute, so ``+inf`` there is harmless;
    ``+inf`` on a loaded edge makes the action ``+inf``.
    """
    if not isinstance(L, Lagrangian):
        L = Lagrangian(L)
    g = obj.graph
    times = g.grid.times
    n = g.n_steps
    pts = g.space.points
    if isinstance(obj, TransportMeasure):
        total = 0.0
        for k in range(n):
            ii, jj = np.nonzero(obj.mass[k])
            if len(ii) == 0:
                continue
            vals = L.evaluate(times[k], pts[ii], g.velocities[ii, jj])
            if np.any(np.isinf(vals)):
                return np.inf
            total += float(obj.mass[k, ii, jj] @ vals)
        return total
    if isinstance(obj, Curve):
        vals = np.array(
            [L(times[k], pts[obj.nodes[k]], v) for k, v in enumerate(obj.velocities)]
        )
        return np.inf if np.any(np.isinf(vals)) else float(vals.sum() / n)
    if isinstance(obj, GeneralizedCurve):
        total = 0.0
        for k, (vecs, w) in enumerate(obj.fibers):
            keep = w > 0
            vals = L.evaluate(times[k], pts[obj.nodes[k]][None, :], vecs[keep])
            if np.any(np.isinf(vals)):
                return np.inf
            total += float(w[keep] @ vals)
        return total / n
    raise TypeError(f"cannot compute the action of {type(obj).__name__}")


def tangent_space(graph, edges=None):
    """Metric space of tangent atoms ``(t_k, x_i, v_ij)``.

    Distance is ``|k - k'| / n + |x - x'| + |v - v'|`` (torus-aware in
    ``x``). ``edges`` restricts the atoms to a list of ``(k, i, j)``;
    by default every allowed edge at every step is included.
    """
    n = graph.n_steps
    if edges is None:
        edges = [(k, i, j) for k in range(n) for i, j in graph.edges]
    e = np.asarray(edges, dtype=int).reshape(-1, 3)
    pts = graph.space.points
    t = e[:, 0] / n
    x = pts[e[:, 1]]
    v = graph.velocities[e[:, 1], e[:, 2]]
    dx = torus_displacement(x[:, None, :], x[None, :, :], graph.space.torus)
    dist = (
        np.abs(t[:, None] - t[None, :])
        + np.linalg.norm(dx, axis=-1)
        + np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
    )
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    coords = np.column_stack([t, x, v])
    return MetricSpace(coords, dist), [tuple(map(int, row)) for row in e]


def tangent_kr_distance(mass_a, mass_b, graph):
    """KR distance between two edge-mass arrays viewed as measures on time x TM.

    Each array must have total mass 1. Only atoms carrying mass in either
    array are instantiated.
    """
    a = np.asarray(mass_a, dtype=float)
    b = np.asarray(mass_b, dtype=float)
    edges = [tuple(map(int, e)) for e in np.argwhere((a > 0) | (b > 0))]
    space, edges = tangent_space(graph, edges)
    idx = tuple(np.array(edges).T)
    wa, wb = a[idx], b[idx]
    value, _ = kr_distance(
        DiscreteMeasure(space, wa / wa.sum()), DiscreteMeasure(space, wb / wb.sum())
    )
    return value


def to_young(eta):
    """The transport measure as a Young measure with fiber ``(x, v)``.

    The fiber space holds the tangent atoms ``(x_i, v_ij)`` of the allowed
    edges with distance ``|x - x'| + |v - v'|``.
    """
    g = eta.graph
    edges = g.edges
    ii = np.array([i for i, _ in edges])
    jj = np.array([j for _, j in edges])
    x = g.space.points[ii]
    v = g.velocities[ii, jj]
    dx = torus_displacement(x[:, None, :], x[None, :, :], g.space.torus)
    dist = np.linalg.norm(dx, axis=-1) + np.linalg.norm(v[:, None] - v[None, :], axis=-1)
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    fiber = MetricSpace(np.column_stack([x, v]), dist)
    n = g.n_steps
    slices = [DiscreteMeasure(fiber, n * eta.mass[k, ii, jj]) for k in range(n)]
    return YoungMeasure(g.grid, tuple(slices))
