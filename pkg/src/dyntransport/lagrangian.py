"""Lagrangians ``L(t, x, v)`` and their edge-cost tables on a time-expanded graph."""

import numpy as np

from .errors import EvaluationError, ValidationError

_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in (
        "abs", "sqrt", "exp", "log", "sin", "cos", "tan", "arctan", "minimum",
        "maximum", "where", "pi", "inf", "sum", "dot", "clip", "cosh", "sinh",
    )
}
_EXPR_NAMESPACE["norm"] = lambda v: np.linalg.norm(v, axis=-1)


class Lagrangian:
    """A cost ``L(t, x, v)``, vectorized over the leading axes of ``x`` and ``v``.

    ``func(t, x, v)`` receives a scalar time and arrays of shape ``(..., d)``
    and must return an array of shape ``(...)``. ``+inf`` is allowed (the edge
    is then treated as absent), NaN and ``-inf`` are not.

    ``fiberwise_convex`` and ``superlinear_constant`` (a ``c`` with
    ``L >= c (|v| - 1)``) are declarations. They are checked on samples by
    :meth:`check_convexity` and :meth:`check_growth`, never enforced.
    """

    kind = "callable"

    def __init__(self, func, fiberwise_convex=False, superlinear_constant=None, name=None):
        self.func = func
        self.fiberwise_convex = bool(fiberwise_convex)
        self.superlinear_constant = superlinear_constant
        self.name = name or getattr(func, "__name__", "L")

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"

    def evaluate(self, t, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.func(t, x, v), dtype=float)
        out = np.broadcast_to(out, np.broadcast_shapes(x.shape[:-1], v.shape[:-1]))
        if np.any(np.isnan(out)) or np.any(out == -np.inf):
            raise EvaluationError(f"{self.name} returned NaN or -inf at t={t}")
        return out

    def __call__(self, t, x, v):
        return float(self.evaluate(t, x, v))

    def edge_costs(self, graph):
        """``cost[k, i, j] = L(t_k, x_i, v_ij)``, ``+inf`` on edges the graph forbids."""
        n = graph.grid.n_steps
        size = graph.space.size
        x = np.broadcast_to(graph.space.points[:, None, :], graph.velocities.shape)
        cost = np.empty((n, size, size))
        for k, t in enumerate(graph.grid.times[:-1]):
            cost[k] = self.evaluate(t, x, graph.velocities)
        cost[:, ~graph.adjacency] = np.inf
        return cost

    def check_growth(self, t, x, v, tol=1e-12):
        """Assert ``L >= c (|v| - 1)`` on the sample points; returns the worst slack."""
        if self.superlinear_constant is None:
            return None
        vals = self.evaluate(t, x, v)
        bound = self.superlinear_constant * (np.linalg.norm(v, axis=-1) - 1.0)
        slack = float(np.min(vals - bound))
        if slack < -tol:
            raise ValidationError(f"{self.name}: declared growth bound fails (slack {slack:.3e})")
        return slack

    def check_convexity(self, t, x, u, w, tol=1e-9):
        """Midpoint convexity in ``v`` on the given segments ``[u, w]``."""
        mid = self.evaluate(t, x, 0.5 * (np.asarray(u) + np.asarray(w)))
        ends = 0.5 * (self.evaluate(t, x, u) + self.evaluate(t, x, w))
        with np.errstate(invalid="ignore"):
            worst = np.nanmax(np.where(np.isinf(ends), -np.inf, mid - ends))
        if worst > tol:
            raise ValidationError(f"{self.name} is not fiberwise convex (excess {worst:.3e})")
        return float(worst)

    @classmethod
    def quadratic(cls, coef=0.5):
        """``coef * |v|^2``: convex and superlinear."""

        def kinetic(t, x, v):
            return coef * np.sum(np.asarray(v) ** 2, axis=-1)

        lag = cls(kinetic, fiberwise_convex=True, superlinear_constant=coef, name="quadratic")
        lag.kind = "quadratic"
        lag.coef = coef
        return lag

    @classmethod
    def from_expression(cls, expr, fiberwise_convex=False, superlinear_constant=None):
        """Build ``L`` from a numpy expression in ``t``, ``x`` and ``v``.

        ``x`` and ``v`` are arrays whose last axis is the coordinate, e.g.
        ``"0.5*sum(v**2, axis=-1) + cos(2*pi*x[..., 0])"``.
        """
        code = compile(expr, "<lagrangian>", "eval")
        for name in code.co_names:
            if name not in _EXPR_NAMESPACE and name not in ("t", "x", "v"):
                raise ValidationError(f"name {name!r} is not allowed in a Lagrangian expression")

        def func(t, x, v):
            scope = dict(_EXPR_NAMESPACE, t=t, x=x, v=v)
            val = eval(code, {"__builtins__": {}}, scope)
            return np.broadcast_to(val, np.broadcast_shapes(x.shape[:-1], v.shape[:-1]))

        lag = cls(func, fiberwise_convex, superlinear_constant, name=expr)
        lag.kind = "expr"
        lag.expr = expr
        return lag


class TableLagrangian(Lagrangian):
    """A Lagrangian known only on the edges of one graph: ``table[k, i, j]``.

    Evaluation at ``(t, x, v)`` looks up the step, the node at ``x`` and the
    node reached with velocity ``v``; anything off the graph is an
    :class:`EvaluationError`.
    """

    kind = "table"

    def __init__(self, graph, table, fiberwise_convex=False, name="table"):
        table = np.array(table, dtype=float)
        shape = (graph.grid.n_steps, graph.space.size, graph.space.size)
        if table.shape != shape:
            raise ValidationError(f"table shape {table.shape} != {shape}")
        table.setflags(write=False)
        self.graph = graph
        self.table = table
        super().__init__(self._lookup, fiberwise_convex=fiberwise_convex, name=name)

    def _lookup(self, t, x, v):
        g = self.graph
        times = g.grid.times[:-1]
        k = np.flatnonzero(np.abs(times - t) <= 1e-9 * max(1.0, abs(t)))
        if len(k) != 1:
            raise EvaluationError(f"t={t} is not a grid step time")
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        xs = np.broadcast_to(x, shape + x.shape[-1:]).reshape(-1, x.shape[-1])
        vs = np.broadcast_to(v, shape + v.shape[-1:]).reshape(-1, v.shape[-1])
        out = np.empty(len(xs))
        for a, (xa, va) in enumerate(zip(xs, vs)):
            i = g.node_at(xa)
            hits = np.flatnonzero(
                np.all(np.abs(g.velocities[i] - va) <= 1e-9 * (1 + np.abs(va)), axis=-1)
            )
            if len(hits) == 0:
                raise EvaluationError("velocity is not on the graph's alphabet")
            out[a] = self.table[k[0], i, hits[0]]
        return out.reshape(shape)

    def edge_costs(self, graph):
        if graph is not self.graph and not graph.same_as(self.graph):
            return super().edge_costs(graph)
        cost = self.table.copy()
        cost[:, ~graph.adjacency] = np.inf
        return cost
