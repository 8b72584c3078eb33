import math

import numpy as np
import pytest

from mfldp.core.config import settings
from mfldp.core.errors import ConvergenceError, ModelError
from mfldp.services.hamiltonian_service import eval_H
from mfldp.services.hjb_service import (
    GridFunction,
    HJBService,
    cube_grid,
    make_grid,
    simplex_grid,
)

# =====================================================================
# Fixtures and helpers
# =====================================================================

@pytest.fixture
def hjb():
    return HJBService()


def linear_tilt_value(x, q, t):
    """
    Exact V(t)f for f(x) = q x on the free d=1 Ehrenfest model: the spins are
    independent, so the exponential moment factorizes per spin.
    """
    stay = 0.5 * (1.0 + math.exp(-2.0 * t))
    up = math.log(math.exp(q) * stay + math.exp(-q) * (1.0 - stay))
    down = math.log(math.exp(-q) * stay + math.exp(q) * (1.0 - stay))
    return 0.5 * (1.0 + x) * up + 0.5 * (1.0 - x) * down

# =====================================================================
# Grids
# =====================================================================

def test_cube_grid_layout():
    grid = cube_grid(2, 5)

    assert grid.size == 25
    assert grid.spacing == pytest.approx(0.5)
    corner = int(np.flatnonzero(np.all(grid.nodes == -1.0, axis=1))[0])
    assert np.all(grid.neighbors[corner, :, 0] == -1)
    assert np.all(grid.neighbors[corner, :, 1] >= 0)


def test_simplex_grid_layout():
    grid = simplex_grid(3, 4)

    assert grid.size == 15
    np.testing.assert_allclose(grid.nodes.sum(axis=1), 1.0)
    vertex = int(np.flatnonzero(grid.nodes[:, 0] == 1.0)[0])
    assert np.all(grid.neighbors[vertex, 1] == -1)
    assert np.all(grid.neighbors[vertex, 0, 1:] >= 0)


def test_grid_function_builds_its_interpolant_once(mocker):
    """Verify that repeated point evaluations reuse one interpolant."""
    # --- Arrange ---
    from mfldp.services import hjb_service

    f = GridFunction.from_callable(cube_grid(1, 5), lambda x: float(x[0]))
    build = mocker.spy(hjb_service._Interpolant, "__init__")

    # --- Act ---
    values = [f([0.1]), f([0.3]), f([-0.7])]

    # --- Assert ---
    assert build.call_count == 1
    assert f.interpolant() is f.interpolant()
    assert values == pytest.approx([0.1, 0.3, -0.7])


def test_grid_functions_interpolate_linear_data(symmetric_glauber_3, free_ehrenfest_2d):
    for model in (symmetric_glauber_3, free_ehrenfest_2d):
        grid = make_grid(model, 6)
        f = GridFunction.from_callable(grid, lambda x: 0.3 * x[0] - 0.2 * x[1])

        point = np.array([0.25, 0.35, 0.4]) if model.domain == "simplex" else np.array([0.13, -0.71])

        assert f(point) == pytest.approx(0.3 * point[0] - 0.2 * point[1], abs=1e-12)


def test_grid_function_rejects_wrong_sizes():
    with pytest.raises(ModelError):
        GridFunction(cube_grid(1, 5), np.zeros(4))

# =====================================================================
# Numerical Hamiltonians
# =====================================================================

@pytest.mark.parametrize("scheme", ["upwind", "lax_friedrichs"])
def test_numerical_hamiltonian_of_constants_is_zero(hjb, free_ehrenfest_2d, symmetric_glauber_3, scheme):
    for model in (free_ehrenfest_2d, symmetric_glauber_3):
        grid = make_grid(model, 5)
        f = GridFunction.constant(grid, 2.0)

        for node in range(grid.size):
            assert hjb.numerical_hamiltonian(model, grid, f, node, scheme) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("scheme", ["upwind", "lax_friedrichs"])
def test_numerical_hamiltonian_is_exact_on_linear_functions_in_the_cube(hjb, sqrt_model, scheme, monkeypatch):
    """
    Verify that both schemes reproduce H on linear data in the cube.
    """
    monkeypatch.setattr(settings, 'P_MAX', 1.0)
    grid = cube_grid(1, 33)
    q = 0.4
    f = GridFunction.from_callable(grid, lambda x: q * x[0])

    for node in range(grid.size):
        assert hjb.numerical_hamiltonian(sqrt_model, grid, f, node, scheme) == pytest.approx(eval_H(sqrt_model, grid.nodes[node], [q]), abs=1e-9)


def test_numerical_hamiltonian_is_exact_on_linear_functions_in_the_simplex(hjb, curie_weiss_glauber):
    model = curie_weiss_glauber(1.0)
    grid = simplex_grid(2, 20)
    p = np.array([0.3, -0.2])
    f = GridFunction.from_callable(grid, lambda mu: float(p @ mu))

    for node in range(grid.size):
        assert hjb.numerical_hamiltonian(model, grid, f, node) == pytest.approx(eval_H(model, grid.nodes[node], p), abs=1e-9)


def test_least_squares_gradient_at_interior_simplex_nodes(hjb, symmetric_glauber_3, monkeypatch):
    monkeypatch.setattr(settings, 'P_MAX', 1.0)
    grid = simplex_grid(3, 9)
    p = np.array([0.5, -0.1, 0.2])
    f = GridFunction.from_callable(grid, lambda mu: float(p @ mu))
    interior = np.flatnonzero(np.all(grid.nodes > 0, axis=1))

    for node in interior:
        value = hjb.numerical_hamiltonian(symmetric_glauber_3, grid, f, int(node), "lax_friedrichs")
        assert value == pytest.approx(eval_H(symmetric_glauber_3, grid.nodes[node], p), abs=1e-9)


def test_unknown_scheme_is_rejected(hjb, free_ehrenfest):
    grid = cube_grid(1, 5)

    with pytest.raises(ModelError):
        hjb.numerical_hamiltonian(free_ehrenfest, grid, GridFunction.constant(grid, 0.0), 0, "central")


@pytest.mark.parametrize("scheme", ["upwind", "lax_friedrichs"])
def test_schemes_are_monotone_in_the_neighbours(hjb, free_ehrenfest_2d, scheme, rng, monkeypatch):
    """
    Verify that raising a neighbour value never lowers the numerical Hamiltonian.
    """
    monkeypatch.setattr(settings, 'P_MAX', 2.0)
    grid = cube_grid(2, 9)
    op = hjb.scheme(free_ehrenfest_2d, grid, scheme)
    src, dst, _, _ = grid.edges()

    for _ in range(50):
        base = 0.3 * np.sin(grid.nodes @ rng.uniform(-1.0, 1.0, size=2) + rng.uniform(0.0, 3.0))
        e = int(rng.integers(src.size))
        raised = base.copy()
        raised[dst[e]] += rng.uniform(0.0, 0.1)

        before = op.apply(base)[src[e]]
        assert op.apply(raised)[src[e]] >= before - 1e-12 * max(1.0, abs(before))


def test_upwind_is_monotone_on_the_simplex(hjb, curie_weiss_glauber, rng):
    model = curie_weiss_glauber(1.5)
    grid = simplex_grid(2, 16)
    op = hjb.scheme(model, grid, "upwind")
    src, dst, _, _ = grid.edges()

    for _ in range(50):
        base = 0.3 * np.cos(3.0 * grid.nodes[:, 0] + rng.uniform(0.0, 3.0))
        e = int(rng.integers(src.size))
        raised = base.copy()
        raised[dst[e]] += rng.uniform(0.0, 0.1)

        before = op.apply(base)[src[e]]
        assert op.apply(raised)[src[e]] >= before - 1e-12 * max(1.0, abs(before))

# =====================================================================
# Resolvent
# =====================================================================

def test_resolvent_of_a_constant_is_the_constant(hjb, sqrt_model, symmetric_glauber_3):
    for model in (sqrt_model, symmetric_glauber_3):
        grid = make_grid(model, 9)

        solution = hjb.solve_resolvent(model, grid, 0.7, GridFunction.constant(grid, -1.25))

        np.testing.assert_allclose(solution.f.values, -1.25, atol=1e-12)
        assert solution.report.converged


def test_resolvent_preserves_order_and_contracts(hjb, free_ehrenfest, rng):
    """
    Verify that the discrete resolvent is order preserving and a sup-norm contraction.
    """
    grid = cube_grid(1, 33)
    op = hjb.scheme(free_ehrenfest, grid)
    x = grid.nodes[:, 0]

    for _ in range(50):
        a, b, c = rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0)
        h1 = GridFunction(grid, a * np.sin(b * x) + c)
        h2 = GridFunction(grid, h1.values + rng.uniform(0.0, 0.3) * np.exp(-((x - rng.uniform(-1, 1)) ** 2) / 0.1))

        f1 = hjb.solve_resolvent(free_ehrenfest, grid, 0.5, h1, operator=op).f
        f2 = hjb.solve_resolvent(free_ehrenfest, grid, 0.5, h2, operator=op).f

        assert np.all(f2.values >= f1.values - 1e-9)
        assert f1.sup_distance(f2) <= h1.sup_distance(h2) + 1e-9


@pytest.mark.parametrize("lam", [1e-3, 1e-2, 1e-1])
def test_resolvent_tends_to_the_identity(hjb, free_ehrenfest, lam):
    grid = cube_grid(1, 33)
    op = hjb.scheme(free_ehrenfest, grid)
    h = GridFunction.from_callable(grid, lambda x: 0.5 * math.sin(x[0]))
    generator = float(np.max(np.abs(op.apply(np.array(h.values)))))

    f = hjb.solve_resolvent(free_ehrenfest, grid, lam, h, operator=op).f

    assert f.sup_distance(h) <= lam * generator + 1e-9


def test_picard_and_newton_agree(hjb, free_ehrenfest):
    grid = cube_grid(1, 17)
    h = GridFunction.from_callable(grid, lambda x: 0.5 * math.sin(x[0]))

    newton = hjb.solve_resolvent(free_ehrenfest, grid, 0.01, h)
    picard = hjb.solve_resolvent(free_ehrenfest, grid, 0.01, h, method="picard")

    assert newton.f.sup_distance(picard.f) <= 1e-8
    assert picard.report.method == "picard"
    assert picard.report.iterations > newton.report.iterations


def test_lax_friedrichs_resolvent_preserves_order(hjb, free_ehrenfest, monkeypatch):
    monkeypatch.setattr(settings, 'P_MAX', 2.0)
    grid = cube_grid(1, 17)
    x = grid.nodes[:, 0]
    h1 = GridFunction(grid, 0.3 * np.sin(x))
    h2 = GridFunction(grid, h1.values + 0.2 * (x > 0))

    f1 = hjb.solve_resolvent(free_ehrenfest, grid, 0.3, h1, scheme="lax_friedrichs")
    f2 = hjb.solve_resolvent(free_ehrenfest, grid, 0.3, h2, scheme="lax_friedrichs")

    assert f1.report.scheme == "lax_friedrichs"
    assert np.all(f2.f.values >= f1.f.values - 1e-9)
    assert f1.f.sup_distance(f2.f) <= 0.2 + 1e-9


def test_resolvent_reports_non_convergence(hjb, free_ehrenfest):
    """
    Verify that an exhausted iteration budget raises ConvergenceError with its residual.
    """
    grid = cube_grid(1, 17)
    h = GridFunction.from_callable(grid, lambda x: math.sin(3.0 * x[0]))

    with pytest.raises(ConvergenceError) as excinfo:
        hjb.solve_resolvent(free_ehrenfest, grid, 1.0, h, method="picard", max_iter=2)

    assert excinfo.value.iterations == 2


def test_resolvent_validates_parameters(hjb, free_ehrenfest):
    grid = cube_grid(1, 9)
    h = GridFunction.constant(grid, 0.0)

    with pytest.raises(ModelError):
        hjb.solve_resolvent(free_ehrenfest, grid, 0.0, h)
    with pytest.raises(ModelError):
        hjb.solve_resolvent(free_ehrenfest, grid, 0.5, h, method="gauss-seidel")
    with pytest.raises(ModelError):
        hjb.solve_resolvent(free_ehrenfest, grid, 0.5, h, damping=1.5)

# =====================================================================
# Comparison experiment
# =====================================================================

def test_comparison_of_a_zero_source(hjb, free_ehrenfest):
    report = hjb.comparison_experiment(free_ehrenfest, 0.5, lambda x: 0.0, [9, 17], [lambda x: 0.0, lambda x: 1.0])

    assert all(d <= 1e-8 for d in report.max_pairwise_differences)
    assert report.refinement_gaps[0] is None
    assert report.refinement_gaps[1] <= 1e-8


def test_comparison_needs_two_initializations(hjb, free_ehrenfest):
    with pytest.raises(ModelError):
        hjb.comparison_experiment(free_ehrenfest, 0.5, lambda x: 0.0, [9], [lambda x: 0.0])


def test_comparison_on_the_sqrt_example(hjb, sqrt_model):
    """
    Verify that solutions from different initializations coincide on the square-root example.
    """
    inits = [lambda x: 0.5 * math.sin(x[0]), lambda x: 0.0, lambda x: 1.0, lambda x: -float(x[0])]

    report = hjb.comparison_experiment(sqrt_model, 0.5, lambda x: 0.5 * math.sin(x[0]), [33, 65, 129], inits)

    assert all(d <= 1e-8 for d in report.max_pairwise_differences)
    assert report.refinement_gaps[0] is None
    assert report.refinement_gaps[2] < report.refinement_gaps[1]
    assert report.lam == 0.5
    assert len(report.iterations) == 3 and len(report.iterations[0]) == 4

# =====================================================================
# Semigroups
# =====================================================================

def test_semigroup_keeps_constants(hjb, free_ehrenfest):
    grid = cube_grid(1, 17)

    value = hjb.semigroup_via_resolvent(free_ehrenfest, grid, GridFunction.constant(grid, 0.7), 0.5, 5)

    np.testing.assert_allclose(value.values, 0.7, atol=1e-12)


def test_semigroup_is_a_sup_norm_contraction(hjb, free_ehrenfest):
    grid = cube_grid(1, 33)
    f0 = GridFunction.from_callable(grid, lambda x: math.sin(2.0 * x[0]))

    value = hjb.semigroup_via_resolvent(free_ehrenfest, grid, f0, 0.25, 10)

    assert np.max(np.abs(value.values)) <= np.max(np.abs(f0.values)) + 1e-8


def test_semigroup_steps_converge(hjb, free_ehrenfest):
    grid = cube_grid(1, 33)
    f0 = GridFunction.from_callable(grid, lambda x: math.sin(x[0]))

    coarse = hjb.semigroup_via_resolvent(free_ehrenfest, grid, f0, 0.25, 20)
    fine = hjb.semigroup_via_resolvent(free_ehrenfest, grid, f0, 0.25, 40)

    assert coarse.sup_distance(fine) <= 10 * grid.spacing


def test_semigroup_matches_the_exact_linear_tilt(hjb, free_ehrenfest):
    """
    Verify that the resolvent-iteration semigroup approaches the exact linear tilt.
    """
    grid = cube_grid(1, 129)
    f0 = GridFunction.from_callable(grid, lambda x: 0.5 * x[0])

    value = hjb.semigroup_via_resolvent(free_ehrenfest, grid, f0, 0.5, 50)

    exact = np.array([linear_tilt_value(x, 0.5, 0.5) for x in grid.nodes[:, 0]])
    assert np.max(np.abs(value.values - exact)) <= 20 * grid.spacing


def test_nisio_dp_keeps_constants(hjb, free_ehrenfest, symmetric_glauber_3):
    for model in (free_ehrenfest, symmetric_glauber_3):
        grid = make_grid(model, 9)

        value = hjb.nisio_value_dp(model, grid, GridFunction.constant(grid, 0.4), 0.3, 10, 3)

        np.testing.assert_allclose(value.values, 0.4, atol=1e-12)


def test_nisio_dp_beats_the_zero_cost_flow(hjb, free_ehrenfest):
    grid = cube_grid(1, 65)
    t = 0.5
    f0 = GridFunction.from_callable(grid, lambda x: 0.5 * x[0])

    value = hjb.nisio_value_dp(free_ehrenfest, grid, f0, t, 50, 10)

    flow_end = grid.nodes[:, 0] * math.exp(-2.0 * t)
    assert np.all(value.values >= 0.5 * flow_end - 1e-3)
    exact = np.array([linear_tilt_value(x, 0.5, t) for x in grid.nodes[:, 0]])
    assert np.max(np.abs(value.values - exact)) <= 0.05


def test_momentum_box_follows_the_lipschitz_constant(hjb):
    grid = cube_grid(1, 17)

    assert hjb.momentum_box(grid, GridFunction.from_callable(grid, lambda x: 0.5 * x[0])) == pytest.approx(2.0)
    assert hjb.momentum_box(grid, GridFunction.from_callable(grid, lambda x: 10 * x[0])) == settings.P_MAX
    assert hjb.momentum_box(grid, GridFunction.constant(grid, 0.0), p_box=3.0) == 3.0


def test_dynamic_programming_and_resolvent_semigroups_agree(hjb, free_ehrenfest):
    """
    Verify that the DP value and the resolvent semigroup agree on the same grid.
    """
    grid = cube_grid(1, 129)
    f0 = GridFunction.from_callable(grid, lambda x: math.sin(x[0]))
    t = 0.25

    resolvent = hjb.semigroup_via_resolvent(free_ehrenfest, grid, f0, t, 50)
    dp = hjb.nisio_value_dp(free_ehrenfest, grid, f0, t, 50, 10)

    assert resolvent.sup_distance(dp) <= 20 * grid.spacing
