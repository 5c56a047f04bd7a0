import math

import numpy as np
import pytest

from sniftle import matops
from sniftle.errors import DecompositionError, InvalidInputError
from sniftle.flowfield import double_gyre, linear_saddle, zero_model
from sniftle.flowmap import IntegratorConfig, solve_flow
from sniftle.uqcov import UncertaintyScales, covariance, gaussian_predictive


def test_zero_model_covariance():
    sol = solve_flow(zero_model(), [1.0, 2.0], 3.0)
    cov = covariance(sol, UncertaintyScales(eps=0.1, delta=0.2))
    np.testing.assert_allclose(cov.total, (0.04 + 0.01 * 3.0) * np.eye(2), rtol=1e-12)


def test_no_noise_leaves_initial_condition_term():
    sol = solve_flow(double_gyre(), [0.3, 0.3], 2.0)
    xi = np.array([[2.0, 0.3], [0.3, 0.5]])
    cov = covariance(sol, UncertaintyScales(eps=0.0, delta=0.1, xi_cov=xi))
    np.testing.assert_array_equal(cov.noise_term, 0.0)
    J = sol.jacobian
    np.testing.assert_allclose(cov.total, 0.01 * J @ xi @ J.T, rtol=1e-13)


def test_linear_saddle_noise_covariance():
    sol = solve_flow(linear_saddle(1.0), [0.0, 0.0], 1.0)
    cov = covariance(sol, UncertaintyScales(eps=1.0, delta=0.0))
    expect = np.diag([math.e ** 2 - 1, 1 - math.e ** -2]) / 2
    np.testing.assert_allclose(np.diag(cov.total), np.diag(expect), rtol=1e-6)


def test_gaussian_predictive():
    sol = solve_flow(zero_model(), [1.0, 2.0], 3.0)
    mean, cov = gaussian_predictive(sol, UncertaintyScales(0.0, 0.0))
    np.testing.assert_array_equal(mean, [1.0, 2.0])
    np.testing.assert_array_equal(cov, 0.0)
    sol = solve_flow(double_gyre(), [1.0, 0.5], 2.0)
    mean, _ = gaussian_predictive(sol, UncertaintyScales(0.0, 0.0))
    np.testing.assert_array_equal(mean, sol.position)


@pytest.mark.parametrize("c", [0.5, 3.0, 17.0])
def test_quadratic_scaling(c):
    sol = solve_flow(double_gyre(), [0.7, 0.2], 3.0)
    xi = np.array([[1.0, 0.2], [0.2, 0.3]])
    base = covariance(sol, UncertaintyScales(1e-2, 3e-3, xi))
    scaled = covariance(sol, UncertaintyScales(c * 1e-2, c * 3e-3, xi))
    np.testing.assert_allclose(scaled.total, c ** 2 * base.total, rtol=1e-12)


def test_independent_of_inverse_mode():
    model = double_gyre()
    scales = UncertaintyScales(1e-3, 1e-3)
    a = covariance(solve_flow(model, [1.2, 0.7], 5.0), scales).total
    b = covariance(solve_flow(model, [1.2, 0.7], 5.0,
                              IntegratorConfig(jacobian_inverse_mode="direct_invert")), scales).total
    np.testing.assert_allclose(b, a, rtol=1e-6)


def test_ic_term_norm_is_squared_jacobian_norm():
    sol = solve_flow(double_gyre(), [1.0, 0.5], 5.0)
    ic = covariance(sol, UncertaintyScales(0.0, 1.0)).ic_term
    assert matops.operator_norm(ic) == pytest.approx(
        matops.operator_norm(sol.jacobian) ** 2, rel=1e-10)


def test_scales_validation():
    with pytest.raises(InvalidInputError):
        UncertaintyScales(eps=-1.0)
    with pytest.raises(DecompositionError):
        UncertaintyScales(xi_cov=[[1.0, 2.0], [2.0, 1.0]])
