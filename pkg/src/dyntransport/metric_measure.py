"""Finite metric spaces, discrete probability measures and the
Kantorovich-Rubinstein (Wasserstein-1) distance.

The primal problem is solved as an uncapacitated min-cost flow on the
bipartite graph between the two supports. The dual potential is the
c-transform of the flow potentials, which is 1-Lipschitz on the whole space.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EvaluationError, ValidationError
from .mcf import min_cost_flow

WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-10
LIPSCHITZ_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def torus_displacement(x, y, periods):
    """Shortest representative of ``y - x`` on the flat torus with the given periods.

    ``periods`` may contain ``inf`` for non-periodic coordinates.
    """
    delta = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    if periods is None:
        return delta
    periods = np.asarray(periods, dtype=float)
    finite = np.isfinite(periods)
    wrapped = delta - periods * np.round(delta / np.where(finite, periods, 1.0))
    return np.where(finite, wrapped, delta)


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """A finite point set in R^d with a distance matrix.

    Build it with :meth:`from_points` to get the Euclidean (or flat torus)
    distance. Passing ``dist`` explicitly checks the metric axioms.
    """

    points: np.ndarray
    dist: np.ndarray
    torus: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "dist", _frozen(self.dist))
        if self.torus is not None:
            object.__setattr__(self, "torus", _frozen(self.torus))
        n = len(pts)
        d = self.dist
        if d.shape != (n, n):
            raise ValidationError(f"distance matrix shape {d.shape} != ({n}, {n})")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValidationError("distances must be finite and nonnegative")
        if np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
            raise ValidationError("distance matrix must be symmetric with zero diagonal")

    @classmethod
    def from_points(cls, points, torus=None):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if torus is not None:
            torus = np.broadcast_to(np.asarray(torus, dtype=float), pts.shape[1:]).copy()
        delta = torus_displacement(pts[:, None, :], pts[None, :, :], torus)
        dist = np.sqrt((delta**2).sum(axis=-1))
        dist = 0.5 * (dist + dist.T)
        np.fill_diagonal(dist, 0.0)
        return cls(pts, dist, torus)

    @classmethod
    def from_distances(cls, dist, points=None, tol=1e-12):
        """Space with an explicit distance matrix; the triangle inequality is checked."""
        dist = np.asarray(dist, dtype=float)
        n = len(dist)
        if points is None:
            points = np.arange(n, dtype=float)[:, None]
        for k in range(n):
            if np.any(dist > dist[:, k, None] + dist[None, k, :] + tol):
                raise ValidationError("distance matrix violates the triangle inequality")
        return cls(points, dist)

    @property
    def size(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def displacement(self, i, j):
        """Vector from point ``i`` to point ``j`` (shortest representative on a torus)."""
        return torus_displacement(self.points[i], self.points[j], self.torus)

    def same_as(self, other):
        if self is other:
            return True
        if self.points.shape != other.points.shape:
            return False
        if (self.torus is None) != (other.torus is None):
            return False
        if self.torus is not None and not np.array_equal(self.torus, other.torus):
            return False
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.dist, other.dist
        )

    def dirac(self, i):
        w = np.zeros(self.size)
        w[i] = 1.0
        return DiscreteMeasure(self, w)

    def uniform(self, nodes=None):
        w = np.zeros(self.size)
        idx = np.arange(self.size) if nodes is None else np.asarray(nodes)
        w[idx] = 1.0 / len(idx)
        return DiscreteMeasure(self, w)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability weights on the points of a :class:`MetricSpace`."""

    space: MetricSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.space.size,):
            raise ValidationError(
                f"expected {self.space.size} weights, got shape {w.shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def support(self):
        return np.flatnonzero(self.weights > 0)

    def mix(self, other, s):
        """The convex combination ``s * self + (1 - s) * other``."""
        _check_same_space(self, other)
        return DiscreteMeasure(self.space, s * self.weights + (1 - s) * other.weights)


@dataclass(frozen=True, eq=False)
class Coupling:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    mass: np.ndarray

    def __post_init__(self):
        m = np.array(self.mass, dtype=float)
        n = self.mu.space.size
        if m.shape != (n, n):
            raise ValidationError(f"coupling shape {m.shape} != ({n}, {n})")
        if np.any(m < 0):
            raise ValidationError("coupling mass must be nonnegative")
        row_err = np.abs(m.sum(axis=1) - self.mu.weights).max()
        col_err = np.abs(m.sum(axis=0) - self.nu.weights).max()
        if max(row_err, col_err) > MARGINAL_TOL:
            raise ValidationError(
                f"coupling marginals off by {max(row_err, col_err):.3e}"
            )
        object.__setattr__(self, "mass", _frozen(m))

    def cost(self):
        return float((self.mass * self.mu.space.dist).sum())


@dataclass(frozen=True, eq=False)
class LipschitzPotential:
    """A 1-Lipschitz function given by its values on the points of ``space``."""

    space: MetricSpace
    values: np.ndarray

    def __post_init__(self):
        f = _frozen(self.values)
        if f.shape != (self.space.size,):
            raise ValidationError("one potential value per point is required")
        excess = np.abs(f[:, None] - f[None, :]) - self.space.dist
        if excess.max() > LIPSCHITZ_TOL:
            raise ValidationError(f"potential is not 1-Lipschitz (excess {excess.max():.3e})")
        object.__setattr__(self, "values", f)


def _check_same_space(mu, nu):
    if not mu.space.same_as(nu.space):
        raise ConfigurationError("measures live on different metric spaces")


def _solve_transport(mu, nu):
    _check_same_space(mu, nu)
    src = mu.support
    dst = nu.support
    ns, nd = len(src), len(dst)
    tails = np.repeat(np.arange(ns), nd)
    heads = ns + np.tile(np.arange(nd), ns)
    costs = mu.space.dist[np.ix_(src, dst)].ravel()
    supply = np.concatenate([mu.weights[src], -nu.weights[dst]])
    flow, pot = min_cost_flow(ns + nd, tails, heads, costs, supply)
    return src, dst, flow.reshape(ns, nd), pot[ns:]


def kr_distance(mu, nu):
    """Kantorovich-Rubinstein distance and an optimal coupling.

    >>> space = MetricSpace.from_points([[0.0], [3.0]])
    >>> value, plan = kr_distance(space.dirac(0), space.dirac(1))
    >>> value
    3.0
    """
    src, dst, flow, _ = _solve_transport(mu, nu)
    mass = np.zeros((mu.space.size, mu.space.size))
    mass[np.ix_(src, dst)] = flow
    plan = Coupling(mu, nu, mass)
    return plan.cost(), plan


def kr_dual(mu, nu):
    """Optimal 1-Lipschitz potential ``f`` maximizing ``sum f (mu - nu)``."""
    _, dst, _, pot = _solve_transport(mu, nu)
    dist = mu.space.dist
    # c-transform of the sink potentials: inf_j d(z, y_j) - pot_j
    f = (dist[:, dst] - pot[None, :]).min(axis=1)
    f = f - f.min()
    potential = LipschitzPotential(mu.space, f)
    value = float(f @ (mu.weights - nu.weights))
    return value, potential


def integrate(f, mu):
    """``sum_i w_i f(x_i)`` over the support of ``mu``."""
    total = 0.0
    for i in mu.support:
        val = float(f(mu.space.points[i]))
        if not np.isfinite(val):
            raise EvaluationError(f"integrand returned {val} at point {i}")
        total += mu.weights[i] * val
    return total
