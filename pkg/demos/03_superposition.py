"""
From flows to curves
====================

A transport measure records how much mass uses each edge at each step.
Stripping off heaviest paths one at a time writes it as a mixture of
curves with the same edge masses, the same time marginals and the same
action. For a density moved by a vector field, the curves are orbits.
"""

import numpy as np

from dyntransport import action, decompose_ode, dyn_ot, marginal_path, superpose, tonelli_dp
from dyntransport.instances import (
    random_convex_lagrangian,
    random_flow,
    random_graph,
    random_measure,
    random_ode_instance,
)

rng = np.random.default_rng(2)
graph = random_graph(rng, 6, 4, dim=2)
eta = random_flow(rng, graph, n_paths=5)

dec = superpose(eta)
print(f"{len(dec)} curves, weights {np.round(dec.weights, 3)}")
print("edge residual      ", np.abs(dec.reconstruct() - eta.mass).max())
path = marginal_path(eta)
print("marginals agree    ", all(np.allclose(dec.evaluate_at(k).weights, path[k].weights)
                                 for k in range(graph.n_steps + 1)))

L = random_convex_lagrangian(rng, 2)
print(f"action of the flow {action(eta, L):.6f}")
print(f"mixture of actions {sum(w * action(c, L) for c, w in dec):.6f}")

# An optimal flow splits into optimal curves.
mu_i, mu_f = random_measure(rng, graph.space, 3), random_measure(rng, graph.space, 3)
opt, _ = dyn_ot(L, mu_i, mu_f, graph)
for c, w in superpose(opt):
    best = tonelli_dp(L, c.nodes[0], c.nodes[-1], graph)[1]
    print(f"  weight {w:.3f}: {c.nodes}  action {action(c, L):.5f}  best {best:.5f}")

# A density pushed by a vector field decomposes into orbits of the field.
V, mus = random_ode_instance(rng, graph)
orbits = decompose_ode(V, mus)
print(f"\n{len(orbits)} orbits carry the density path:")
for c, w in orbits:
    print(f"  {w:.3f}  {c.nodes}")
