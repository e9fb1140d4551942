"""Action minimization on a time-expanded graph.

* :func:`tonelli_dp` -- minimal action between two nodes by dynamic programming.
* :func:`dyn_ot` -- minimal action between two measures as a min-cost flow.
* :func:`certify_duality` -- free-endpoint minimum over paths (DP) against the
  minimum over all transport measures (LP); they coincide because the
  vertices of the flow polytope are single paths.

Edge costs are ``L(t_k, x_i, v_ij) / n`` so every reported action is the
time average of ``L``. ``+inf`` costs remove the edge.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InfeasibilityError, ValidationError
from .lagrangian import Lagrangian, TableLagrangian
from .mcf import min_cost_flow
from .metric_measure import DiscreteMeasure
from .transport import Curve, TransportMeasure, action

__all__ = [
    "Lagrangian",
    "TableLagrangian",
    "ValueFunction",
    "edge_cost_table",
    "value_function",
    "tonelli_dp",
    "dyn_ot",
    "certify_duality",
]

TIE_TOL = 1e-12


def edge_cost_table(L, graph):
    """``L(t_k, x_i, v_ij) / n`` with ``+inf`` on missing edges."""
    if not isinstance(L, Lagrangian):
        L = Lagrangian(L)
    return L.edge_costs(graph) / graph.n_steps


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """``values[k, i]``: least time-averaged action to reach ``(t_k, x_i)``; ``+inf`` if unreachable."""

    graph: object
    values: np.ndarray

    def recursion_residual(self, L):
        """Largest violation of ``u(k+1, j) = min_i u(k, i) + L(t_k, x_i, v_ij) / n``."""
        cost = edge_cost_table(L, self.graph)
        u = self.values
        worst = 0.0
        for k in range(self.graph.n_steps):
            rhs = (u[k][:, None] + cost[k]).min(axis=0)
            both_inf = np.isinf(rhs) & np.isinf(u[k + 1])
            with np.errstate(invalid="ignore"):
                diff = np.where(both_inf, 0.0, np.abs(rhs - u[k + 1]))
            worst = max(worst, float(np.nanmax(diff)))
        return worst


def _forward(cost, start):
    n, size, _ = cost.shape
    u = np.full((n + 1, size), np.inf)
    u[0] = start
    for k in range(n):
        u[k + 1] = (u[k][:, None] + cost[k]).min(axis=0)
    return u


def _backward(cost, end):
    n, size, _ = cost.shape
    w = np.full((n + 1, size), np.inf)
    w[n] = end
    for k in range(n - 1, -1, -1):
        w[k] = (cost[k] + w[k + 1][None, :]).min(axis=1)
    return w


def value_function(L, graph, x_i=None):
    """Forward value function from ``x_i`` (or from every node at cost 0 when ``None``)."""
    cost = edge_cost_table(L, graph)
    start = np.zeros(graph.size)
    if x_i is not None:
        start = np.full(graph.size, np.inf)
        start[x_i] = 0.0
    return ValueFunction(graph, _forward(cost, start))


def _trace(cost, w, x_i):
    """Lexicographically smallest optimal path from ``x_i`` given cost-to-go ``w``."""
    nodes = [x_i]
    node = x_i
    for k in range(cost.shape[0]):
        cand = cost[k, node] + w[k + 1]
        best = w[k, node]
        node = int(np.flatnonzero(cand <= best + TIE_TOL * max(1.0, abs(best)))[0])
        nodes.append(node)
    return nodes


def tonelli_dp(L, x_i, x_f, graph):
    """Minimal-action path from node ``x_i`` at ``t_0`` to ``x_f`` at ``t_n``.

    Returns ``(curve, action, value_function)``. Among optimal paths the one
    with the lexicographically smallest node sequence is returned.
    """
    cost = edge_cost_table(L, graph)
    start = np.full(graph.size, np.inf)
    start[x_i] = 0.0
    u = _forward(cost, start)
    if not np.isfinite(u[-1, x_f]):
        raise InfeasibilityError(
            f"node {x_f} cannot be reached from {x_i} in {graph.n_steps} steps at finite cost"
        )
    end = np.full(graph.size, np.inf)
    end[x_f] = 0.0
    w = _backward(cost, end)
    curve = Curve(graph, _trace(cost, w, x_i))
    return curve, float(u[-1, x_f]), ValueFunction(graph, u)


def _layered_arcs(cost):
    n, size, _ = cost.shape
    ks, ii, jj = np.nonzero(np.isfinite(cost))
    tails = ks * size + ii
    heads = (ks + 1) * size + jj
    return ks, ii, jj, tails, heads


def dyn_ot(L, mu_i, mu_f, graph):
    """Minimal-action transport measure from ``mu_i`` at ``a`` to ``mu_f`` at ``b``.

    Solved as a min-cost flow on the time-expanded graph. Returns ``(eta, action)``.
    """
    for mu in (mu_i, mu_f):
        if not isinstance(mu, DiscreteMeasure) or not mu.space.same_as(graph.space):
            raise ValidationError("boundary measures must live on the graph's space")
    cost = edge_cost_table(L, graph)
    n, size, _ = cost.shape
    ks, ii, jj, tails, heads = _layered_arcs(cost)
    supply = np.zeros((n + 1) * size)
    supply[:size] = mu_i.weights
    supply[n * size :] -= mu_f.weights
    flow, _ = min_cost_flow((n + 1) * size, tails, heads, cost[ks, ii, jj], supply)
    mass = np.zeros_like(cost)
    mass[ks, ii, jj] = flow / n
    eta = TransportMeasure(graph, mass)
    return eta, action(eta, L)


def _flow_polytope(cost):
    """Equality constraints of transport measures with free boundary marginals."""
    n, size, _ = cost.shape
    ks, ii, jj, _, _ = _layered_arcs(cost)
    nvar = len(ks)
    rows, cols, vals = [], [], []
    # slice 0 carries mass 1/n
    rows += [0] * int(np.count_nonzero(ks == 0))
    cols += list(np.flatnonzero(ks == 0))
    vals += [1.0] * int(np.count_nonzero(ks == 0))
    r = 1
    for k in range(n - 1):
        for node in range(size):
            inc = np.flatnonzero((ks == k) & (jj == node))
            out = np.flatnonzero((ks == k + 1) & (ii == node))
            if len(inc) == 0 and len(out) == 0:
                continue
            rows += [r] * (len(inc) + len(out))
            cols += list(inc) + list(out)
            vals += [1.0] * len(inc) + [-1.0] * len(out)
            r += 1
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nvar))
    b = np.zeros(r)
    b[0] = 1.0 / n
    return A, b, (ks, ii, jj)


def certify_duality(f, graph):
    """``(dp_min, lp_min)``: least action of ``f`` over paths and over transport measures.

    Both minima have free endpoints. ``dp_min`` comes from dynamic
    programming, ``lp_min`` from the HiGHS LP solver on the flow polytope.
    """
    cost = edge_cost_table(f, graph)
    n = graph.n_steps
    u = _forward(cost, np.zeros(graph.size))
    dp_min = float(u[-1].min())

    A, b, (ks, ii, jj) = _flow_polytope(cost)
    c = n * cost[ks, ii, jj]
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise InfeasibilityError(f"flow LP failed: {res.message}")
    return dp_min, float(res.fun)
