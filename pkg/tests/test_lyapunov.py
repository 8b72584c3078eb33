import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import xlogy

from mfldp.api.models import FlowConfig
from mfldp.core.errors import ModelError
from mfldp.services.action_service import gibbs_initial_rate
from mfldp.services.lyapunov_service import lyapunov_check, stationary_derivative


def curie_weiss_magnetization(beta):
    """Largest root of m = tanh(beta m)."""
    if beta <= 1.0:
        return 0.0
    return brentq(lambda m: m - math.tanh(beta * m), 1e-6, 1.0)


def test_relative_entropy_decreases_to_zero(symmetric_glauber_3):
    report = lyapunov_check(symmetric_glauber_3, [0.7, 0.2, 0.1], FlowConfig(dt=1e-2, horizon=10.0), tolerance=1e-8)

    assert report.monotone
    assert report.values[-1] < 1e-6
    assert report.values[0] > report.values[-1]


def test_uniform_start_is_stationary(symmetric_glauber_3):
    report = lyapunov_check(symmetric_glauber_3, [1 / 3, 1 / 3, 1 / 3], FlowConfig(dt=1e-2, horizon=2.0))

    assert report.monotone
    assert report.max_increase <= 1e-15
    np.testing.assert_allclose(report.values, 0.0, atol=1e-15)


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_curie_weiss_flows_settle_at_the_gibbs_minimum(curie_weiss_glauber, beta):
    model = curie_weiss_glauber(beta)
    m = curie_weiss_magnetization(beta)
    fixed_point = np.array([(1 + m) / 2, (1 - m) / 2])

    report = lyapunov_check(model, [0.6, 0.4], FlowConfig(dt=1e-2, horizon=20.0), tolerance=1e-8)

    assert report.monotone
    assert report.values[-1] == pytest.approx(gibbs_initial_rate(model)(fixed_point), abs=1e-6)


def test_magnetization_root_at_beta_two():
    assert curie_weiss_magnetization(2.0) == pytest.approx(0.9575, abs=1e-4)


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_monotone_from_several_starts_with_the_step_doubling_tolerance(curie_weiss_glauber, beta, rng):
    model = curie_weiss_glauber(beta)
    for _ in range(5):
        a = rng.uniform(0.05, 0.95)

        report = lyapunov_check(model, [a, 1.0 - a], FlowConfig(dt=1e-2, horizon=5.0))

        assert report.monotone, (a, report.max_increase, report.tolerance)
        assert report.tolerance >= 1e-12


def test_step_doubling_tolerance_ignores_steps_that_do_not_divide_the_horizon(free_ehrenfest):
    """
    Verify that a step of 0.3 on a unit horizon, realized as four steps of 0.25,
    gets the same discretization tolerance as a step of 0.25.
    """
    # --- Arrange ---
    rising = lambda x: -float(x[0]) ** 2

    # --- Act ---
    dividing = lyapunov_check(free_ehrenfest, [0.9], FlowConfig(dt=0.25, horizon=1.0), I0=rising)
    ragged = lyapunov_check(free_ehrenfest, [0.9], FlowConfig(dt=0.3, horizon=1.0), I0=rising)

    # --- Assert ---
    assert ragged.times == dividing.times
    assert ragged.tolerance == pytest.approx(dividing.tolerance, rel=1e-12)
    assert ragged.tolerance < 0.01
    assert not ragged.monotone


def test_stationary_derivative_vanishes_at_the_uniform_measure(symmetric_glauber_3):
    assert stationary_derivative(symmetric_glauber_3, [1 / 3, 1 / 3, 1 / 3]) == pytest.approx(0.0, abs=1e-8)


def test_stationary_derivative_is_negative_away_from_equilibrium(curie_weiss_glauber):
    assert stationary_derivative(curie_weiss_glauber(1.0), [0.8, 0.2]) < 0.0


def test_ehrenfest_models_need_an_explicit_rate(free_ehrenfest):
    with pytest.raises(ModelError):
        lyapunov_check(free_ehrenfest, [0.5], FlowConfig(dt=1e-2, horizon=1.0))


def test_product_entropy_is_a_lyapunov_function_for_free_spins(free_ehrenfest):
    def spin_entropy(x):
        up, down = (1 + x[0]) / 2, (1 - x[0]) / 2
        return float(xlogy(up, 2 * up) + xlogy(down, 2 * down))

    report = lyapunov_check(free_ehrenfest, [0.9], FlowConfig(dt=1e-2, horizon=3.0), I0=spin_entropy)

    assert report.monotone
    assert report.values[-1] < 1e-4
