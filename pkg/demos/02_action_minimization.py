"""
Least action on a time-expanded graph
=====================================

A particle hops between grid points at the times ``t_0 < ... < t_n``; the
velocity of a hop is its displacement over ``dt``. We minimize the time
average of a Lagrangian ``L(t, x, v)``, first between two points by dynamic
programming, then between two measures as a min-cost flow.
"""

import numpy as np

from dyntransport import Lagrangian, certify_duality, dyn_ot, marginal_path, tonelli_dp
from dyntransport.instances import line_graph, random_graph, random_table_lagrangian

kinetic = Lagrangian.quadratic(0.5)  # |v|^2 / 2

# Between two points the straight line at constant speed wins. On finer
# grids the discrete minimum approaches |x_f - x_i|^2 / 2.
print(" n   discrete action   exact     error")
for n in (4, 8, 16, 32):
    graph = line_graph(n * n + 1, n)
    x_f = int(round(0.7 * n * n))
    curve, value, _ = tonelli_dp(kinetic, 0, x_f, graph)
    exact = graph.space.points[x_f, 0] ** 2 / 2
    print(f"{n:2d}   {value:.8f}        {exact:.6f}  {value - exact:.2e}")

# A potential well changes the picture: the path lingers near x = 0.5.
well = Lagrangian.from_expression(
    "0.5*sum(v**2, axis=-1) + 4*(x[..., 0] - 0.5)**2", fiberwise_convex=True
)
graph = line_graph(21, 10)
curve, value, u = tonelli_dp(well, 0, 20, graph)
print("\npath through the well:", np.round(curve.positions[:, 0], 2))
print("Bellman residual of the value function:", u.recursion_residual(well))

# Between measures: mass at the two ends moves inward.
mu_i = graph.space.uniform([0, 20])
mu_f = graph.space.uniform([5, 15])
eta, value = dyn_ot(kinetic, mu_i, mu_f, graph)
print(f"\ndynamic transport action {value:.4f}")
for k, mu in enumerate(marginal_path(eta)[::5]):
    print(f"  t = {graph.grid.times[5 * k]:.1f}: support {np.round(graph.space.points[mu.support, 0], 2)}")

# Free endpoints: the cheapest path and the cheapest transport measure cost
# the same, because the flow polytope's vertices are single paths.
rng = np.random.default_rng(1)
g = random_graph(rng, 5, 3)
f = random_table_lagrangian(rng, g, low=-1.0, high=1.0)
dp_min, lp_min = certify_duality(f, g)
print(f"\npaths (DP) {dp_min:.10f}  vs  measures (LP) {lp_min:.10f}")
