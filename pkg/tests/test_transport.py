import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyntransport import (
    ConfigurationError,
    ContractError,
    Curve,
    GeneralizedCurve,
    Lagrangian,
    ProjectionCertificate,
    TestFunction,
    TimeExpandedGraph,
    TimeGrid,
    TransportMeasure,
    ValidationError,
    action,
    barycentric_project,
    continuity_residual,
    curve_embed,
    integrate_young,
    jensen_reduce,
    marginal_path,
    to_young,
)
from dyntransport.instances import (
    line_graph,
    random_convex_lagrangian,
    random_curve,
    random_flow,
    random_generalized_curve,
    random_graph,
)

KINETIC = Lagrangian.quadratic(0.5)


@pytest.fixture
def line5():
    # points 0, .25, .5, .75, 1 ; two steps on [0, 1]
    return line_graph(5, 2)


def test_graph_velocities_and_self_loops(line5):
    assert line5.velocities[0, 2, 0] == pytest.approx(1.0)  # 0.5 / dt
    assert np.all(np.diag(line5.adjacency))
    g = TimeExpandedGraph.from_edges(line5.space, line5.grid, [(0, 1)])
    assert g.adjacency[3, 3] and not g.adjacency[1, 0]


def test_torus_velocity_wraps():
    from dyntransport import MetricSpace

    space = MetricSpace.from_points([[0.05], [0.95]], torus=[1.0])
    g = TimeExpandedGraph.full(space, TimeGrid(0, 1, 1))
    assert g.velocities[0, 1, 0] == pytest.approx(-0.1)


def test_invalid_flows_are_rejected(line5):
    mass = np.zeros((2, 5, 5))
    mass[0, 0, 1] = 0.5
    mass[1, 2, 2] = 0.5  # arrives at 1, leaves from 2
    with pytest.raises(ValidationError):
        TransportMeasure(line5, mass)
    mass[1, 2, 2], mass[1, 1, 1] = 0.0, 0.4
    with pytest.raises(ValidationError):
        TransportMeasure(line5, mass)
    g = TimeExpandedGraph.from_edges(line5.space, line5.grid, [])
    ok = np.zeros((2, 5, 5))
    ok[0, 0, 1] = ok[1, 1, 1] = 0.5
    with pytest.raises(ValidationError):
        TransportMeasure(g, ok)


def test_curve_rejects_non_edges(line5):
    g = TimeExpandedGraph.within_radius(line5.space, line5.grid, 0.3)
    with pytest.raises(ValidationError):
        Curve(g, (0, 2, 2))
    Curve(g, (0, 1, 2))


def test_constant_curve_embed(line5):
    eta = curve_embed(Curve(line5, (3, 3, 3)))
    assert eta.mass[0, 3, 3] == eta.mass[1, 3, 3] == 0.5
    assert action(eta, KINETIC) == 0.0


def test_straight_curve_embed(line5):
    c = Curve(line5, (0, 2, 4))
    eta = curve_embed(c)
    assert eta.mass[0, 0, 2] == 0.5 and eta.mass[1, 2, 4] == 0.5
    assert eta.n_support == 2
    # constant speed 1: average of |v|^2 / 2
    assert action(eta, KINETIC) == pytest.approx(0.5, abs=1e-15)
    assert action(c, KINETIC) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_action_of_embed_is_riemann_sum(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, 4, dim=2)
    L = random_convex_lagrangian(rng, 2)
    c = random_curve(rng, g)
    times = g.grid.times
    riemann = sum(L(times[k], c.positions[k], c.velocities[k]) for k in range(4)) / 4
    assert action(curve_embed(c), L) == pytest.approx(riemann, abs=1e-12)
    assert action(c, L) == pytest.approx(riemann, abs=1e-12)


def test_action_trivial_lagrangians(line5):
    eta = curve_embed(Curve(line5, (0, 1, 4)))
    assert action(eta, Lagrangian(lambda t, x, v: np.zeros(x.shape[:-1]))) == 0.0
    assert action(eta, Lagrangian(lambda t, x, v: np.ones(x.shape[:-1]))) == pytest.approx(1.0)


def test_action_infinite_only_on_loaded_edges(line5):
    L = Lagrangian(lambda t, x, v: np.where(np.abs(v[..., 0]) > 1.5, np.inf, 1.0))
    assert action(curve_embed(Curve(line5, (0, 1, 2))), L) == pytest.approx(1.0)
    assert action(curve_embed(Curve(line5, (0, 4, 4))), L) == np.inf


def test_action_rejects_nan(line5):
    from dyntransport import EvaluationError

    L = Lagrangian(lambda t, x, v: np.full(x.shape[:-1], np.nan))
    with pytest.raises(EvaluationError):
        action(curve_embed(Curve(line5, (0, 1, 2))), L)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.0, 1.0))
def test_action_is_affine(seed, s):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 5, 3)
    L = random_convex_lagrangian(rng, 1)
    e1, e2 = random_flow(rng, g, 3), random_flow(rng, g, 4)
    mixed = action(e1.mix(e2, s), L)
    assert mixed == pytest.approx(s * action(e1, L) + (1 - s) * action(e2, L), abs=1e-12)


def test_continuity_residual_trivial_tests(line5):
    rng = np.random.default_rng(0)
    eta = random_flow(rng, line5, 4)
    const = TestFunction(line5, np.full((3, 5), 2.7))
    assert continuity_residual(eta, const) == pytest.approx(0.0, abs=1e-15)
    time_only = TestFunction.from_callable(line5, lambda t, x: t)
    assert continuity_residual(eta, time_only) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_continuity_residual_vanishes_for_random_g(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, 5, dim=2)
    eta = random_flow(rng, g, 7)
    for _ in range(20):
        gv = rng.normal(size=(6, 6))
        # the stated double sum, written out
        n = 5
        direct = 0.0
        for k, i, j, m in eta.atoms():
            direct += n * m * (gv[k + 1, j] - gv[k, i])
        mu = marginal_path(eta)
        direct -= gv[-1] @ mu[-1].weights - gv[0] @ mu[0].weights
        r = continuity_residual(eta, TestFunction(g, gv))
        assert abs(r) < 1e-12
        assert abs(direct) < 1e-12


def test_continuity_residual_detects_wrong_boundary(line5):
    eta = curve_embed(Curve(line5, (0, 1, 2)))
    gv = np.zeros((3, 5))
    gv[-1, 2] = 1.0
    assert continuity_residual(eta, gv, mu_b=line5.space.dirac(2)) == 0.0
    assert continuity_residual(eta, gv, mu_b=line5.space.dirac(3)) == pytest.approx(1.0)


def test_continuity_residual_detects_broken_conservation(line5):
    rng = np.random.default_rng(4)
    eta = random_flow(rng, line5, 3)
    k, i, j, m = eta.atoms()[0]
    mass = np.array(eta.mass)
    mass[k, i, j] += 1e-6
    broken = TransportMeasure(line5, mass, validate=False)
    worst = 0.0
    for kk in range(3):
        for node in range(5):
            basis = np.zeros((3, 5))
            basis[kk, node] = 1.0
            worst = max(worst, abs(continuity_residual(broken, basis)))
    assert worst >= 1e-7


def test_residual_grid_mismatch(line5):
    eta = curve_embed(Curve(line5, (0, 1, 2)))
    with pytest.raises(ConfigurationError):
        continuity_residual(eta, np.zeros((4, 5)))


def test_marginal_path_of_curve_is_dirac_path(line5):
    c = Curve(line5, (4, 2, 1))
    path = marginal_path(curve_embed(c))
    for k, mu in enumerate(path):
        assert mu.weights[c.nodes[k]] == 1.0


def test_marginal_path_half_split(line5):
    mass = np.zeros((2, 5, 5))
    mass[0, 2, 1] = mass[0, 2, 3] = 0.25
    mass[1, 1, 1] = mass[1, 3, 3] = 0.25
    mid = marginal_path(TransportMeasure(line5, mass))[1]
    assert mid.weights[1] == mid.weights[3] == 0.5


@pytest.mark.parametrize("seed", range(5))
def test_marginal_path_in_and_out_agree(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 7, 5, dim=2)
    eta = random_flow(rng, g, 6)
    outs = marginal_path(eta, side="out")
    ins = marginal_path(eta, side="in")
    for a, b in zip(outs, ins):
        assert np.abs(a.weights - b.weights).max() < 1e-12


def test_projection_idempotent_on_deterministic_flow(line5):
    eta = curve_embed(Curve(line5, (0, 2, 3)))
    field, projected = barycentric_project(eta)
    assert isinstance(projected, TransportMeasure)
    assert np.array_equal(projected.mass, eta.mass)
    assert field.values[0, 0, 0] == pytest.approx(1.0)
    assert np.isnan(field.values[0, 1, 0])


def test_projection_of_symmetric_split_uses_self_loop():
    g = line_graph(3, 1)
    mass = np.zeros((1, 3, 3))
    mass[0, 1, 0] = mass[0, 1, 2] = 0.5
    eta = TransportMeasure(g, mass)
    field, projected = barycentric_project(eta)
    assert field.values[0, 1, 0] == 0.0
    assert projected.mass[0, 1, 1] == 1.0
    assert action(projected, KINETIC) <= action(eta, KINETIC)


def test_projection_certificates():
    g = line_graph(4, 1)
    mass = np.zeros((1, 4, 4))
    mass[0, 0, 0] = mass[0, 0, 1] = 0.5  # mean displacement half a cell
    _, cert = barycentric_project(TransportMeasure(g, mass))
    assert isinstance(cert, ProjectionCertificate)
    assert cert.off_grid == ((0, 0),)

    g2 = line_graph(3, 2)
    mass = np.zeros((2, 3, 3))
    mass[0, 1, 0] = mass[0, 1, 2] = 0.25
    mass[1, 0, 0] = mass[1, 2, 2] = 0.25
    _, cert = barycentric_project(TransportMeasure(g2, mass))
    assert cert.off_grid == ()
    assert set(cert.unbalanced) == {(1, 0), (1, 1), (1, 2)}


def _split_at_last_step(rng, n_steps):
    """Deterministic flow except for symmetric splits on the final step."""
    g = line_graph(9, n_steps, length=2.0)
    n = n_steps
    mass = np.zeros((n, 9, 9))
    starts = rng.choice(np.arange(2, 7), size=2, replace=False)
    weights = rng.dirichlet([1, 1])
    for node, w in zip(starts, weights):
        for k in range(n - 1):
            mass[k, node, node] += w / n
        offset = int(rng.integers(1, 3))
        mass[n - 1, node, node - offset] += w / n * 0.5
        mass[n - 1, node, node + offset] += w / n * 0.5
    return TransportMeasure(g, mass)


@pytest.mark.parametrize("seed", range(5))
def test_projection_never_increases_convex_action(seed):
    rng = np.random.default_rng(seed)
    eta = _split_at_last_step(rng, 3)
    L = random_convex_lagrangian(rng, 1)
    _, projected = barycentric_project(eta)
    assert isinstance(projected, TransportMeasure)
    assert action(projected, L) <= action(eta, L) + 1e-12


def test_jensen_dirac_equality_and_variance_gap():
    g = line_graph(3, 1, length=2.0)  # velocities in {-2,...,2}
    dirac = GeneralizedCurve.from_curve(Curve(g, (1, 1)))
    a, b = jensen_reduce(dirac, KINETIC)
    assert a == b == 0.0
    Gamma = GeneralizedCurve(g, (1, 1), (([[1.0], [-1.0]], [0.5, 0.5]),))
    curve_action, gen_action = jensen_reduce(Gamma, Lagrangian.quadratic(1.0))
    assert curve_action == 0.0
    assert gen_action == pytest.approx(1.0)


def test_jensen_requires_convexity_flag():
    g = line_graph(3, 1)
    Gamma = GeneralizedCurve.from_curve(Curve(g, (0, 1)))
    with pytest.raises(ContractError):
        jensen_reduce(Gamma, Lagrangian(lambda t, x, v: np.cos(v[..., 0])))


@pytest.mark.parametrize("seed", range(10))
def test_jensen_piecewise_linear(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 5, 3, dim=2)
    L = random_convex_lagrangian(rng, 2, strict=False)
    Gamma = random_generalized_curve(rng, g)
    curve_action, gen_action = jensen_reduce(Gamma, L)
    assert gen_action >= curve_action - 1e-10


def test_generalized_curve_barycenter_enforced():
    g = line_graph(3, 1)
    with pytest.raises(ValidationError):
        GeneralizedCurve(g, (0, 2), (([[1.0], [0.0]], [0.5, 0.5]),))


def test_to_young_integrates_like_action():
    rng = np.random.default_rng(11)
    g = random_graph(rng, 5, 3, dim=2)
    eta = random_flow(rng, g, 5)
    L = random_convex_lagrangian(rng, 2)
    young = to_young(eta)
    f = lambda t, p: L(t, p[:2], p[2:])
    assert integrate_young(f, young) == pytest.approx(action(eta, L), abs=1e-12)
