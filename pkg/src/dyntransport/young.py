"""Young measures on a time interval: one fiber measure per time step.

A :class:`YoungMeasure` stores its disintegration directly, so
:func:`product` and :func:`disintegrate` are inverse data-structure
operations and integration is a weighted double sum.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, EvaluationError, ValidationError
from .metric_measure import DiscreteMeasure


@dataclass(frozen=True)
class TimeGrid:
    """``n_steps`` equal slices of ``[a, b]``, each carrying weight ``1/n_steps``."""

    a: float
    b: float
    n_steps: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValidationError(f"need a < b, got [{self.a}, {self.b}]")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError("n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self):
        return (self.b - self.a) / self.n_steps

    @property
    def times(self):
        """The ``n_steps + 1`` grid times ``t_0 = a, ..., t_n = b``."""
        return self.a + self.dt * np.arange(self.n_steps + 1)

    @property
    def slice_weights(self):
        return np.full(self.n_steps, 1.0 / self.n_steps)


@dataclass(frozen=True, eq=False)
class YoungMeasure:
    grid: TimeGrid
    slices: tuple

    def __post_init__(self):
        slices = tuple(self.slices)
        if len(slices) != self.grid.n_steps:
            raise ValidationError(
                f"{len(slices)} slices for a grid of {self.grid.n_steps} steps"
            )
        space = slices[0].space
        for s in slices[1:]:
            if not s.space.same_as(space):
                raise ConfigurationError("all slices must share one fiber space")
        object.__setattr__(self, "slices", slices)

    @property
    def space(self):
        return self.slices[0].space

    def as_product(self):
        """Mass of the product measure as an array ``(n_steps, n_points)``."""
        n = self.grid.n_steps
        return np.stack([s.weights for s in self.slices]) / n


@dataclass(frozen=True)
class Integrand:
    """A function ``f(t, p)`` on time x fiber points.

    ``kind`` is ``"caratheodory"`` (finite everywhere) or ``"normal"``
    (``+inf`` allowed). ``growth`` is a declared bound ``|f| <= growth * (1 + |v|)``
    where ``v`` is the slice ``p[velocity_start:]``; ``None`` means undeclared.
    """

    func: Callable
    kind: str = "caratheodory"
    growth: float | None = None
    velocity_start: int = 0

    def __post_init__(self):
        if self.kind not in ("caratheodory", "normal"):
            raise ValueError(f"unknown integrand kind {self.kind!r}")

    def __call__(self, t, p):
        val = float(self.func(t, p))
        if np.isnan(val) or val == -np.inf:
            raise EvaluationError(f"integrand returned {val} at t={t}")
        if val == np.inf and self.kind != "normal":
            raise EvaluationError("caratheodory integrand returned +inf")
        if self.growth is not None and np.isfinite(val):
            v = np.asarray(p, dtype=float)[self.velocity_start :]
            if abs(val) > self.growth * (1.0 + np.linalg.norm(v)) + 1e-12:
                raise ValidationError(
                    f"declared growth bound {self.growth} violated at t={t}"
                )
        return val


def product(grid, slices):
    """The Young measure ``lambda (x) eta_t`` built from one slice per time step."""
    for s in slices:
        if not isinstance(s, DiscreteMeasure):
            raise ValidationError("slices must be DiscreteMeasure instances")
    return YoungMeasure(grid, tuple(slices))


def disintegrate(eta):
    """The family of slices; ``product(eta.grid, disintegrate(eta))`` rebuilds ``eta``."""
    return list(eta.slices)


def integrate_young(f, eta):
    if not isinstance(f, Integrand):
        f = Integrand(f)
    times = eta.grid.times
    points = eta.space.points
    total = 0.0
    for k, s in enumerate(eta.slices):
        inner = 0.0
        for i in s.support:
            val = f(times[k], points[i])
            if val == np.inf:
                return np.inf
            inner += s.weights[i] * val
        total += inner
    return total / eta.grid.n_steps
