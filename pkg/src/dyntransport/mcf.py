"""Uncapacitated min-cost flow by successive shortest paths.

Small dense instances only (a few thousand arcs). Arc capacities are
unbounded; the only residual capacities are on reverse arcs and equal the
current flow. Potentials are kept so that every residual arc has a
nonnegative reduced cost, which makes the final potentials an optimal dual
solution.
"""

import heapq

import numpy as np

from .errors import InfeasibilityError

#: excess below this is treated as fully routed
ROUTING_TOL = 1e-14


def _initial_potentials(n_nodes, tails, heads, costs):
    # Bellman-Ford from a virtual root joined to every node by a zero-cost arc
    p = np.zeros(n_nodes)
    for _ in range(n_nodes):
        cand = p[tails] + costs
        changed = False
        for a in np.flatnonzero(cand < p[heads] - 1e-15):
            v = heads[a]
            if cand[a] < p[v]:
                p[v] = cand[a]
                changed = True
        if not changed:
            return p
    raise InfeasibilityError("negative-cost cycle in flow network")


def min_cost_flow(n_nodes, tails, heads, costs, supply):
    """Route ``supply`` (positive at sources, negative at sinks) at minimum cost.

    Returns ``(flow, potential)`` where ``flow[a]`` is the flow on arc ``a``
    and ``potential`` satisfies ``costs[a] + potential[tail] - potential[head] >= 0``
    for every arc, with equality wherever the flow is positive.
    """
    tails = np.asarray(tails, dtype=np.intp)
    heads = np.asarray(heads, dtype=np.intp)
    costs = np.asarray(costs, dtype=float)
    excess = np.array(supply, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("arc costs must be finite; drop forbidden arcs instead")

    n_arcs = len(tails)
    flow = np.zeros(n_arcs)
    out_arcs = [[] for _ in range(n_nodes)]
    in_arcs = [[] for _ in range(n_nodes)]
    for a in range(n_arcs):
        out_arcs[tails[a]].append(a)
        in_arcs[heads[a]].append(a)

    pot = _initial_potentials(n_nodes, tails, heads, costs)
    cost_list = costs.tolist()
    tail_list = tails.tolist()
    head_list = heads.tolist()

    while True:
        sources = [v for v in range(n_nodes) if excess[v] > ROUTING_TOL]
        if not sources or not np.any(excess < -ROUTING_TOL):
            break

        dist = [np.inf] * n_nodes
        pred = [None] * n_nodes  # (arc, +1 forward | -1 reverse)
        done = [False] * n_nodes
        heap = []
        for s in sources:
            dist[s] = 0.0
            heap.append((0.0, s))
        heapq.heapify(heap)
        target = None
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if excess[u] < -ROUTING_TOL:
                target = u
                break
            pu = pot[u]
            for a in out_arcs[u]:
                v = head_list[a]
                if done[v]:
                    continue
                nd = d + max(0.0, cost_list[a] + pu - pot[v])
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = (a, 1)
                    heapq.heappush(heap, (nd, v))
            for a in in_arcs[u]:
                if flow[a] <= 0.0:
                    continue
                v = tail_list[a]
                if done[v]:
                    continue
                nd = d + max(0.0, -cost_list[a] + pu - pot[v])
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = (a, -1)
                    heapq.heappush(heap, (nd, v))
        if target is None:
            raise InfeasibilityError(
                "remaining supply cannot reach any remaining demand"
            )

        dt = dist[target]
        for v in range(n_nodes):
            pot[v] += min(dist[v], dt) if done[v] else dt

        # walk back to the source, find the bottleneck
        path = []
        v = target
        while pred[v] is not None:
            a, direction = pred[v]
            path.append((a, direction))
            v = tail_list[a] if direction == 1 else head_list[a]
        source = v
        delta = min(excess[source], -excess[target])
        binding = None
        for a, direction in path:
            if direction == -1 and flow[a] < delta:
                delta = flow[a]
                binding = a
        for a, direction in path:
            flow[a] += direction * delta
        if binding is not None:
            flow[binding] = 0.0
        if delta == excess[source]:
            excess[source] = 0.0
        else:
            excess[source] -= delta
        if delta == -excess[target]:
            excess[target] = 0.0
        else:
            excess[target] += delta

    if np.any(np.abs(excess) > 1e-12):
        raise InfeasibilityError(
            f"unbalanced supply: residual excess {np.abs(excess).max():.3e}"
        )
    np.maximum(flow, 0.0, out=flow)
    return flow, pot
