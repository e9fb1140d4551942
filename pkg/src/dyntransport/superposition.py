"""Decompositions of transport measures into curves.

* :func:`superpose` strips a flow into weighted paths.
* :func:`decompose_ode` does the same for the lift of a density path to the
  graph of a vector field, so every path is an orbit of the discrete ODE.
* :func:`cycle_decompose` strips a closed measure into weighted periodic
  cycles, each spread uniformly over its integer time shifts.
* :func:`holonomic_approximate` glues those cycles into a single periodic
  curve whose measure approaches the closed measure as ``q`` grows.

Stripping is greedy and deterministic: every extraction zeroes at least one
edge, so the number of curves never exceeds the number of loaded edges.
"""

from collections import deque
from dataclasses import dataclass, field
from math import gcd, lcm

import numpy as np

from .errors import CertificateError, InfeasibilityError, ValidationError
from .metric_measure import DiscreteMeasure
from .transport import (
    ClosedMeasure,
    Curve,
    TransportMeasure,
    tangent_kr_distance,
    tangent_space,
)

RESIDUAL_TOL = 1e-12
CONSERVATION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CurveDecomposition:
    """Weighted paths ``(curve, weight)`` on one graph."""

    graph: object
    items: tuple

    def __post_init__(self):
        items = tuple((c, float(w)) for c, w in self.items)
        for c, w in items:
            if w <= 0:
                raise ValidationError("decomposition weights must be positive")
            if c.graph is not self.graph and not c.graph.same_as(self.graph):
                raise ValidationError("curve lives on another graph")
        total = sum(w for _, w in items)
        if abs(total - 1.0) > CONSERVATION_TOL:
            raise ValidationError(f"decomposition weights sum to {total!r}")
        object.__setattr__(self, "items", items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def curves(self):
        return [c for c, _ in self.items]

    @property
    def weights(self):
        return np.array([w for _, w in self.items])

    def reconstruct(self):
        """Edge masses of ``sum_c w_c * curve_embed(c)``."""
        g = self.graph
        n = g.n_steps
        mass = np.zeros((n, g.size, g.size))
        for c, w in self.items:
            nodes = c.nodes
            for k in range(n):
                mass[k, nodes[k], nodes[k + 1]] += w / n
        return mass

    def evaluate_at(self, k):
        """Pushforward of the weights by evaluation at ``t_k``."""
        w = np.zeros(self.graph.size)
        for c, weight in self.items:
            w[c.nodes[k]] += weight
        return DiscreteMeasure(self.graph.space, w)


def _max_bottleneck_path(residual):
    n, size, _ = residual.shape
    best = np.full(size, np.inf)
    preds = []
    for k in range(n):
        cand = np.minimum(best[:, None], residual[k])
        preds.append(cand.argmax(axis=0))
        best = cand.max(axis=0)
    end = int(best.argmax())
    nodes = [end]
    for k in range(n - 1, -1, -1):
        nodes.append(int(preds[k][nodes[-1]]))
    return nodes[::-1], float(best[end])


def superpose(eta, tol=CONSERVATION_TOL):
    """Decompose a transport measure into weighted curves.

    Repeatedly removes the max-bottleneck path through loaded edges (ties go
    to the smallest node index) until every slice is empty.
    """
    if not isinstance(eta, TransportMeasure):
        raise ValidationError("superpose needs a TransportMeasure")
    n = eta.graph.n_steps
    slice_err = np.abs(eta.mass.sum(axis=(1, 2)) - 1.0 / n).max()
    if slice_err > tol or eta.kirchhoff_residual() > tol:
        raise ValidationError("superpose needs a conserved flow with slices of mass 1/n")
    residual = np.array(eta.mass)
    items = []
    while residual.sum(axis=(1, 2)).max() >= RESIDUAL_TOL:
        nodes, b = _max_bottleneck_path(residual)
        if b <= 0:
            raise ValidationError(
                f"residual mass {residual.sum():.3e} does not form a path"
            )
        for k in range(n):
            residual[k, nodes[k], nodes[k + 1]] -= b
        items.append((Curve(eta.graph, nodes), n * b))
    return CurveDecomposition(eta.graph, tuple(items))


def decompose_ode(V, mu_path, tol=CONSERVATION_TOL):
    """Decompose a density path transported by ``V`` into ODE orbits.

    ``mu_path`` holds ``mu_{t_0}, ..., mu_{t_n}``. Each loaded node must be
    sent to a node by ``x + dt * V(t_k, x)`` (else :class:`CertificateError`
    listing the offenders), and ``mu`` must satisfy the discrete continuity
    equation (else :class:`ValidationError` reporting the largest residual).
    """
    g = V.graph
    n = g.n_steps
    if len(mu_path) != n + 1:
        raise ValidationError(f"need {n + 1} marginals, got {len(mu_path)}")
    weights = np.array([mu.weights for mu in mu_path])
    mass = np.zeros((n, g.size, g.size))
    offenders = []
    for k in range(n):
        for i in np.flatnonzero(weights[k] > 0):
            v = V.values[k, i]
            j = None
            if not np.any(np.isnan(v)):
                diff = np.abs(g.velocities[i] - v).max(axis=-1)
                hits = np.flatnonzero((diff <= 1e-9 * (1 + np.abs(v).max())) & g.adjacency[i])
                j = int(hits[0]) if len(hits) else None
            if j is None:
                offenders.append((k, int(i)))
            else:
                mass[k, i, j] = weights[k, i] / n
    if offenders:
        raise CertificateError(
            f"{len(offenders)} loaded nodes are not sent to a node by the field", offenders
        )
    pushed = n * mass.sum(axis=1)
    err = float(np.abs(pushed - weights[1:]).max())
    if err > tol:
        raise ValidationError(f"continuity equation violated (max residual {err:.3e})")
    lift = TransportMeasure(g, mass, validate=False)
    return superpose(lift, tol=tol)


@dataclass(frozen=True, eq=False)
class SolenoidalDecomposition:
    """Weighted periodic cycles on the time-periodic graph.

    A cycle is a node sequence ``c_0, ..., c_{Tn-1}`` with ``c_0`` at time 0;
    step ``s`` goes ``c_s -> c_{s+1 mod Tn}`` at time step ``s mod n``. Its
    weight is spread uniformly over the ``T`` integer time shifts, so
    :meth:`shift` permutes phases without changing :meth:`reconstruct`.
    """

    graph: object
    items: tuple

    def __post_init__(self):
        n = self.graph.n_steps
        adj = self.graph.adjacency
        items = []
        for cyc, w in self.items:
            cyc = tuple(int(i) for i in cyc)
            if len(cyc) == 0 or len(cyc) % n:
                raise ValidationError(f"cycle length {len(cyc)} is not a multiple of {n}")
            for s in range(len(cyc)):
                if not adj[cyc[s], cyc[(s + 1) % len(cyc)]]:
                    raise ValidationError("cycle uses an edge the graph does not allow")
            if w <= 0:
                raise ValidationError("cycle weights must be positive")
            items.append((cyc, float(w)))
        total = sum(w for _, w in items)
        if abs(total - 1.0) > CONSERVATION_TOL:
            raise ValidationError(f"cycle weights sum to {total!r}")
        object.__setattr__(self, "items", tuple(items))

    def __len__(self):
        return len(self.items)

    @property
    def periods(self):
        n = self.graph.n_steps
        return [len(c) // n for c, _ in self.items]

    @property
    def weights(self):
        return np.array([w for _, w in self.items])

    def reconstruct(self):
        g = self.graph
        n = g.n_steps
        mass = np.zeros((n, g.size, g.size))
        for cyc, w in self.items:
            counts = np.zeros_like(mass)
            length = len(cyc)
            for s in range(length):
                counts[s % n, cyc[s], cyc[(s + 1) % length]] += 1.0
            mass += (w / length) * counts
        return mass

    def shift(self, periods=1):
        """Apply the time shift ``t -> t + periods`` to every cycle."""
        n = self.graph.n_steps
        items = []
        for cyc, w in self.items:
            r = (periods * n) % len(cyc)
            items.append((cyc[r:] + cyc[:r], w))
        return SolenoidalDecomposition(self.graph, tuple(items))

    def segments(self):
        """One-period windows of every phase of every cycle, as a curve decomposition."""
        n = self.graph.n_steps
        items = []
        for cyc, w in self.items:
            T = len(cyc) // n
            ext = cyc + cyc
            for p in range(T):
                items.append((Curve(self.graph, ext[p * n : p * n + n + 1]), w / T))
        return CurveDecomposition(self.graph, tuple(items))


def _find_cycle(residual):
    """Follow heaviest edges from the heaviest time-0 node until a state repeats."""
    n = residual.shape[0]
    start = int(residual[0].sum(axis=1).argmax())
    seen = {}
    seq = []
    k, i = 0, start
    while (k, i) not in seen:
        seen[(k, i)] = len(seq)
        seq.append(i)
        j = int(residual[k, i].argmax())
        if residual[k, i, j] <= 0:
            return None
        k, i = (k + 1) % n, j
    pos = seen[(k, i)]
    cyc = seq[pos:]
    r = (-pos) % n  # rotate so the cycle starts at time 0
    return tuple(cyc[r:] + cyc[:r])


def cycle_decompose(eta, tol=CONSERVATION_TOL):
    """Split a closed measure into periodic cycles with uniform phase."""
    if not isinstance(eta, ClosedMeasure):
        eta = ClosedMeasure(eta.graph, eta.mass)
    if eta.kirchhoff_residual() > tol:
        raise ValidationError("cycle_decompose needs a cyclically conserved flow")
    n = eta.graph.n_steps
    residual = np.array(eta.mass)
    items = []
    while residual.sum(axis=(1, 2)).max() >= RESIDUAL_TOL:
        cyc = _find_cycle(residual)
        if cyc is None:
            raise ValidationError(
                f"acyclic residual mass {residual.sum():.3e} left after cycle stripping"
            )
        length = len(cyc)
        steps = [(s % n, cyc[s], cyc[(s + 1) % length]) for s in range(length)]
        b = min(residual[e] for e in steps)
        for e in steps:
            residual[e] -= b
        items.append((cyc, b * length))
    return SolenoidalDecomposition(eta.graph, tuple(items))


@dataclass(frozen=True, eq=False)
class PeriodicCurve:
    """A closed walk ``c_0, ..., c_{Tn-1}`` starting at time 0; period ``T`` in time units."""

    graph: object
    nodes: tuple

    def __post_init__(self):
        SolenoidalDecomposition(self.graph, ((self.nodes, 1.0),))
        object.__setattr__(self, "nodes", tuple(int(i) for i in self.nodes))

    @property
    def period(self):
        return len(self.nodes) // self.graph.n_steps

    def closed_measure(self):
        mass = SolenoidalDecomposition(self.graph, ((self.nodes, 1.0),)).reconstruct()
        return ClosedMeasure(self.graph, mass)


@dataclass(frozen=True, eq=False)
class HolonomicApproximation:
    curve: PeriodicCurve
    period: int
    kr_error: float
    error_bound: float
    counts: tuple
    repeats: int
    decomposition: SolenoidalDecomposition = field(repr=False)


def apportion(weights, q):
    """Integers ``a`` with ``sum(a) == q`` and ``a/q`` closest to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    exact = q * w
    a = np.floor(exact + 1e-12).astype(int)
    rem = exact - a
    order = sorted(range(len(w)), key=lambda m: (-round(rem[m], 12), m))
    for m in order[: q - int(a.sum())]:
        a[m] += 1
    return a


def _bridge(graph, src_states, dst_states):
    """Shortest walk on the periodic state graph from any of ``src_states`` to any of ``dst_states``.

    Returns the list of states visited, from the departure state to the
    arrival state inclusive.
    """
    n = graph.n_steps
    dst = set(dst_states)
    prev = {s: None for s in src_states}
    queue = deque(src_states)
    while queue:
        state = queue.popleft()
        if state in dst:
            path = [state]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        k, i = state
        for j in np.flatnonzero(graph.adjacency[i]):
            nxt = ((k + 1) % n, int(j))
            if nxt not in prev:
                prev[nxt] = state
                queue.append(nxt)
    return None


def _holonomic_candidate(eta, sol, a):
    """Periodic curve traversing cycle ``m`` in proportion to ``a[m]``, with its KR error and bound."""
    g = eta.graph
    n = g.n_steps
    w = sol.weights
    periods = sol.periods
    kept = [m for m in range(len(w)) if a[m] > 0]
    big = lcm(*[periods[m] for m in kept])
    reps = {m: 1 if len(kept) == 1 else int(a[m] * big // periods[m]) for m in kept}

    cycles = {m: sol.items[m][0] for m in kept}
    states = {m: [(s % n, c) for s, c in enumerate(cycles[m])] for m in kept}
    bridges = []
    for idx, m in enumerate(kept):
        nxt = kept[(idx + 1) % len(kept)]
        if len(kept) == 1:
            bridges.append([states[m][0]])
            break
        path = _bridge(g, states[m], states[nxt])
        if path is None:
            raise InfeasibilityError("cycles of the measure cannot be connected on the graph")
        bridges.append(path)

    # block idx enters at the end of bridge idx-1 and leaves at the start of bridge idx
    walk = []
    loop_steps = {}
    for idx, m in enumerate(kept):
        cyc = cycles[m]
        length = len(cyc)
        enter = bridges[idx - 1][-1] if len(kept) > 1 else bridges[0][0]
        leave = bridges[idx][0]
        p_in = states[m].index(enter)
        p_out = states[m].index(leave)
        partial = (p_out - p_in) % length
        for s in range(reps[m] * length + partial):
            walk.append(cyc[(p_in + s) % length])
        loop_steps[m] = reps[m] * length
        walk.extend(k_i[1] for k_i in bridges[idx][:-1])
    # the walk starts at the entry state of the first block: rotate to time 0
    first_state = bridges[-1][-1] if len(kept) > 1 else bridges[0][0]
    r = (-first_state[0]) % n
    walk = walk[r:] + walk[:r]
    curve = PeriodicCurve(g, tuple(walk))

    gamma_mass = curve.closed_measure().mass
    kr_error = tangent_kr_distance(gamma_mass, eta.mass, g)

    total = len(walk)
    fractions = np.zeros(len(w))
    for m in kept:
        fractions[m] = loop_steps[m] / total
    stray = 1.0 - fractions.sum()
    atoms = [tuple(map(int, e)) for e in np.argwhere((gamma_mass > 0) | (eta.mass > 0))]
    space, _ = tangent_space(g, atoms)
    diam = float(space.dist.max())
    bound = diam * 0.5 * (np.abs(fractions - w).sum() + stray)
    traversals = tuple(int(reps.get(m, 0)) for m in range(len(w)))
    return curve, kr_error, bound, traversals


def holonomic_approximate(eta, q):
    """Approximate a closed measure by the measure of one periodic curve.

    For every ``s <= q`` the cycle weights are rounded to fractions
    ``a_m / s`` of time (largest remainder). Cycle ``m`` is then traversed
    ``s**2 * a_m`` times and consecutive cycles are joined by shortest walks
    on the time-periodic graph, so the bridges occupy an ``O(1/s**2)`` share
    of the period. The candidate closest to ``eta`` is returned. Candidates
    depend on ``s`` only, hence the error never grows with ``q``.

    ``counts`` holds the rounded time shares in lowest terms; cycle ``m``
    fills ``counts[m] * repeats`` blocks of ``lcm(periods)`` periods, except
    that a lone surviving cycle is traversed once. ``kr_error`` is the KR distance on time x TM
    between the curve's measure and ``eta``. ``error_bound`` is ``diam * TV``
    for the chosen candidate.
    """
    if int(q) != q or q < 1:
        raise ValueError("q must be a positive integer")
    q = int(q)
    sol = cycle_decompose(eta)
    best = None
    seen = set()
    for s in range(1, q + 1):
        a = np.asarray(apportion(sol.weights, s))
        scaled = tuple(int(v) for v in s * s * a)
        if scaled in seen:
            continue
        seen.add(scaled)
        cand = _holonomic_candidate(eta, sol, scaled)
        if best is None or cand[1] < best[1][1] - 1e-14:
            best = (a, cand)
    a, (curve, kr_error, bound, _) = best
    common = gcd(*(int(v) for v in a))
    counts = tuple(int(v) // common for v in a)
    total = int(a.sum())
    repeats = total * total * common
    return HolonomicApproximation(curve, curve.period, kr_error, bound, counts, repeats, sol)
