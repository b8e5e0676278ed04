import math

import numpy as np
import pytest

from fair_welfare.core.exceptions import DomainCollapse, LambdaOverflow, NonConvergence
from fair_welfare.models.data_models import MinimizeResult, SolverConfig, SolveStatus
from fair_welfare.optim.dual import DualBisection
from fair_welfare.optim.line_search import minimize_on_sphere, minimize_smooth, tangent_gradient

CENTER = np.array([3.0, -1.0])


def quadratic(x):
    return float(np.sum((x - CENTER) ** 2))


def quadratic_gradient(x):
    return 2.0 * (x - CENTER)


def rosenbrock(x):
    return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)


def rosenbrock_gradient(x):
    return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])


class TestMinimizeSmooth:
    def test_newton_quadratic(self):
        result = minimize_smooth(
            quadratic, quadratic_gradient, np.zeros(2), tol_g=1e-10, max_iter=50, hessian=lambda x: 2 * np.eye(2)
        )
        np.testing.assert_allclose(result.x, CENTER)
        assert result.iterations <= 2

    def test_gradient_descent_quadratic(self):
        result = minimize_smooth(quadratic, quadratic_gradient, np.zeros(2), tol_g=1e-9, max_iter=500)
        np.testing.assert_allclose(result.x, CENTER, atol=1e-8)
        assert result.gradient_norm <= 1e-9

    def test_respects_domain(self):
        visited = []

        def tracked(x):
            visited.append(np.array(x))
            return quadratic(x)

        result = minimize_smooth(
            tracked, quadratic_gradient, np.zeros(2), tol_g=1e-10, max_iter=100, in_domain=lambda x: abs(x[0]) < 4.0
        )
        np.testing.assert_allclose(result.x, CENTER)
        assert all(abs(x[0]) < 4.0 for x in visited)

    def test_domain_collapse_at_start(self):
        with pytest.raises(DomainCollapse):
            minimize_smooth(quadratic, quadratic_gradient, np.zeros(2), 1e-8, 10, in_domain=lambda x: False)

    def test_non_convergence(self):
        with pytest.raises(NonConvergence) as excinfo:
            minimize_smooth(rosenbrock, rosenbrock_gradient, np.array([-1.2, 1.0]), tol_g=1e-12, max_iter=3)
        assert excinfo.value.iterations == 3

    def test_large_offset_does_not_stop_early(self):
        # ニュートン減少量は |f| に比べて丸め誤差程度だが勾配はまだ大きい
        result = minimize_smooth(
            lambda x: 1e12 + 1e-3 * float((x[0] - 1.0) ** 2),
            lambda x: 2e-3 * (x - 1.0),
            np.zeros(1),
            tol_g=1e-10,
            max_iter=20,
            hessian=lambda x: 2e-3 * np.eye(1),
        )
        np.testing.assert_allclose(result.x, [1.0])
        assert result.gradient_norm <= 1e-10

    def test_boundary_stall(self):
        def max_step(x, direction):
            return x[0] / -direction[0] if direction[0] < 0 else math.inf

        # 最小解 x = -1 は定義域 x >= 0 の外
        with pytest.raises(DomainCollapse):
            minimize_smooth(
                lambda x: float(x[0] ** 2 + 2.0 * x[0]),
                lambda x: 2.0 * x + 2.0,
                np.ones(1),
                tol_g=1e-10,
                max_iter=1000,
                hessian=lambda x: 2.0 * np.eye(1),
                in_domain=lambda x: x[0] >= 0,
                max_step=max_step,
            )

    def test_rounding_floor(self):
        # 値が変わらず勾配も減らない点
        kwargs = dict(tol_g=1e-12, max_iter=50, hessian=lambda x: 2.0 * np.eye(1))
        with pytest.raises(NonConvergence):
            minimize_smooth(lambda x: 1e12, lambda x: np.array([1e-3]), np.zeros(1), **kwargs)
        result = minimize_smooth(
            lambda x: 1e12, lambda x: np.array([1e-3]), np.zeros(1), accept_rounding_floor=True, **kwargs
        )
        np.testing.assert_array_equal(result.x, [0.0])
        assert result.gradient_norm == pytest.approx(1e-3)


class TestMinimizeOnSphere:
    def test_linear_objective(self):
        target = np.array([1.0, 2.0, -2.0])
        result = minimize_on_sphere(
            lambda x: -float(target @ x), lambda x: -target, np.array([1.0, 0.0, 0.0]), tol_g=1e-10, max_iter=1000
        )
        np.testing.assert_allclose(result.x, target / 3.0, atol=1e-6)
        assert np.linalg.norm(result.x) == pytest.approx(1.0)

    def test_tangent_gradient(self):
        x = np.array([1.0, 0.0])
        np.testing.assert_allclose(tangent_gradient(x, np.array([2.0, 3.0])), [0.0, 3.0])


def linear_inner(lam, start):
    """x² - λx の最小解 x = λ/2"""
    return MinimizeResult(x=np.array([lam / 2.0]), value=-(lam**2) / 4.0, gradient_norm=0.0, iterations=1)


def saturating_inner(lam, start):
    return MinimizeResult(x=np.array([lam / (2.0 + lam)]), value=0.0, gradient_norm=0.0, iterations=1)


class TestDualBisection:
    def test_inactive(self):
        result = DualBisection(linear_inner, lambda x: float(x[0]), SolverConfig()).run(0.0)
        assert result.lam == 0.0
        assert not result.active
        assert result.status == SolveStatus.OPTIMAL

    def test_smallest_feasible_lambda(self):
        result = DualBisection(linear_inner, lambda x: float(x[0]), SolverConfig()).run(1.0)
        assert result.active
        assert result.lam == pytest.approx(2.0, rel=1e-9)
        assert result.constraint_value >= 1.0
        assert result.status == SolveStatus.OPTIMAL
        lower, upper = result.bracket
        assert upper - lower <= 1e-10 * upper

    def test_non_integer_lambda(self):
        result = DualBisection(linear_inner, lambda x: float(x[0]), SolverConfig()).run(0.3)
        assert result.lam == pytest.approx(0.6, rel=1e-9)
        assert result.constraint_value - 0.3 <= 1e-6

    def test_overflow(self):
        bisection = DualBisection(saturating_inner, lambda x: float(x[0]), SolverConfig(lambda_max=1e3))
        with pytest.raises(LambdaOverflow):
            bisection.run(1.0)

    def test_max_outer(self):
        result = DualBisection(linear_inner, lambda x: float(x[0]), SolverConfig(max_outer=4)).run(0.3)
        assert result.status == SolveStatus.MAX_ITER
        assert result.constraint_value >= 0.3
