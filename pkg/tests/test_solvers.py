import numpy as np
import pytest

from conftest import homogeneous
from fair_welfare.core.benefits import default_classification_benefit
from fair_welfare.core.exceptions import Infeasible, LambdaOverflow, ParameterValidationError
from fair_welfare.models.data_models import (
    BenefitSpec,
    ConstraintSpec,
    Dataset,
    LinearModel,
    SolverConfig,
    SolveStatus,
    Task,
)
from fair_welfare.solvers.classification import (
    ClassificationLagrangian,
    ClassificationSolver,
    solve_constrained_classification,
)
from fair_welfare.solvers.base import mean_utility, predict
from fair_welfare.solvers.factory import SolverFactory, solve_unconstrained
from fair_welfare.solvers.kkt import closed_form_realizable, kkt_residuals, loss_gradient_norm_at_zero
from fair_welfare.solvers.regression import (
    RegressionLagrangian,
    RegressionSolver,
    solve_constrained_regression,
)


def regression_spec(alpha, tau):
    return ConstraintSpec(alpha=alpha, tau=tau, benefit=BenefitSpec.regression())


def classification_spec(alpha, tau):
    return ConstraintSpec(alpha=alpha, tau=tau, benefit=default_classification_benefit())


@pytest.fixture
def overlapping_classification():
    """同じ特徴量に両方のラベルがある（線形分離不可能な）分類データ"""
    x = [0.0, 0.5, 1.0, 1.5, 0.0, 0.5, 1.0, 1.5, 0.25, 1.25]
    labels = [1, -1, 1, -1, -1, 1, -1, 1, 1, -1]
    return Dataset(
        features=homogeneous(x),
        labels=np.array(labels, dtype=float),
        task=Task.CLASSIFICATION,
    )


@pytest.fixture
def outlier_dataset():
    """最小二乗解で両端の便益が負になる3点データ（ラベル 0, 0, 9）"""
    return Dataset(features=homogeneous([0.0, 1.0, 2.0]), labels=np.array([0.0, 0.0, 9.0]), task=Task.REGRESSION)


class TestClosedForm:
    def test_values(self, realizable):
        _, theta = realizable
        model, lam = closed_form_realizable(theta, 0.5, 4.0)
        assert model.intercept - theta.intercept == pytest.approx(15.0)
        assert lam == pytest.approx(240.0)
        np.testing.assert_array_equal(model.weights[:-1], theta.weights[:-1])

    def test_other_alpha(self, realizable):
        _, theta = realizable
        model, lam = closed_form_realizable(theta, 0.8, 2.0)
        shift = 2.0**1.25 - 1.0
        assert model.intercept - theta.intercept == pytest.approx(shift)
        assert shift == pytest.approx(1.37841, abs=1e-5)
        assert lam == pytest.approx(2.0 * shift * (1.0 + shift) ** 0.2 / 0.8)

    @pytest.mark.parametrize("alpha, tau", [(0.0, 2.0), (1.0, 2.0), (0.5, 1.0)])
    def test_invalid(self, realizable, alpha, tau):
        _, theta = realizable
        with pytest.raises(ParameterValidationError):
            closed_form_realizable(theta, alpha, tau)


class TestRegressionSolver:
    @pytest.mark.parametrize("alpha, tau", [(0.5, 4.0), (0.8, 2.0), (0.3, 1.5), (0.3, 4.0)])
    def test_matches_closed_form(self, realizable, alpha, tau):
        dataset, theta = realizable
        spec = regression_spec(alpha, tau)
        result = solve_constrained_regression(dataset, spec)
        expected, lam = closed_form_realizable(theta, alpha, tau)
        np.testing.assert_allclose(result.model.weights, expected.weights, atol=1e-5)
        assert result.lam == pytest.approx(lam, rel=1e-5)
        assert result.active
        assert result.status == SolveStatus.OPTIMAL
        assert result.certified

        residuals = kkt_residuals(dataset, spec, result)
        assert residuals.stationarity_norm <= 1e-6 * (1.0 + loss_gradient_norm_at_zero(dataset))
        assert residuals.primal_violation <= 1e-6
        assert residuals.dual_feasibility == 0.0

    def test_inactive_constraint(self, realizable):
        dataset, theta = realizable
        result = solve_constrained_regression(dataset, regression_spec(0.5, 0.5))
        assert result.lam == 0.0
        assert not result.active
        np.testing.assert_allclose(result.model.weights, theta.weights, atol=1e-8)

    def test_least_squares_outside_domain(self, outlier_dataset):
        lagrangian = RegressionLagrangian(outlier_dataset, regression_spec(0.5, 0.5), SolverConfig())
        assert not lagrangian.in_domain(lagrangian.least_squares)

        # 下限付き最小二乗は端の2点の便益を ε_b に張り付かせる
        result = solve_constrained_regression(outlier_dataset, regression_spec(0.5, 0.5))
        assert result.lam == 0.0
        assert not result.active
        assert result.status == SolveStatus.OPTIMAL
        assert not result.certified
        np.testing.assert_allclose(result.model.weights, [4.5, -1.0], atol=1e-5)
        assert result.constraint_value == pytest.approx((2.0 * 1e-4 + 4.5**0.5) / 3.0, abs=1e-3)

    def test_small_lambda_stays_in_domain(self, outlier_dataset):
        lagrangian = RegressionLagrangian(outlier_dataset, regression_spec(0.5, 1.0), SolverConfig())
        for lam in (1e-2, 1e-4, 1e-6):
            result = lagrangian.solve(lam, None)
            assert np.all(np.isfinite(result.x))
            assert lagrangian.in_domain(result.x)

    def test_active_above_boundary_welfare(self, outlier_dataset):
        result = solve_constrained_regression(outlier_dataset, regression_spec(0.5, 1.0))
        assert result.active
        assert result.lam > 0
        assert result.status == SolveStatus.OPTIMAL
        assert abs(result.constraint_value - 1.0) <= 1e-6
        assert result.loss > 4.75 - 1e-6

    @pytest.mark.parametrize("tau", [0.5, 1.0])
    def test_noisy_data_with_small_lambda(self, synthetic_regression, tau):
        result = solve_constrained_regression(synthetic_regression, regression_spec(0.5, tau))
        assert result.status == SolveStatus.OPTIMAL
        assert result.constraint_value >= tau - 1e-6
        assert result.active == (result.lam > 0)

    def test_active_on_noisy_data(self, four_point_dataset):
        solver = RegressionSolver(SolverConfig())
        unconstrained = solver.solve_unconstrained(four_point_dataset)
        np.testing.assert_allclose(unconstrained.weights, [0.36, 0.46], atol=1e-12)
        spec = regression_spec(0.5, 0.95)
        assert solver.constraint_value(four_point_dataset, spec, unconstrained) < 0.95

        result = solver.solve_constrained(four_point_dataset, spec)
        assert result.active
        assert result.lam > 0
        assert 0.95 - 1e-9 <= result.constraint_value <= 0.95 + 1e-6
        assert result.loss > solver.loss(four_point_dataset, unconstrained)

    def test_welfare_monotone_in_tau(self, synthetic_regression):
        solver = RegressionSolver(SolverConfig())
        losses = []
        for tau in (0.5, 1.0, 1.5, 2.0):
            result = solver.solve_constrained(synthetic_regression, regression_spec(0.5, tau))
            assert result.constraint_value >= tau - 1e-9
            losses.append(result.loss)
        assert losses == sorted(losses)

    def test_lambda_overflow(self, realizable):
        dataset, _ = realizable
        with pytest.raises(LambdaOverflow):
            RegressionSolver(SolverConfig(lambda_max=10.0)).solve_constrained(dataset, regression_spec(0.5, 4.0))

    def test_rejects_classification_data(self, overlapping_classification):
        with pytest.raises(ParameterValidationError):
            RegressionSolver(SolverConfig()).solve_constrained(overlapping_classification, regression_spec(0.5, 1.0))

    def test_rejects_binary_benefit(self, realizable):
        dataset, _ = realizable
        with pytest.raises(ParameterValidationError):
            RegressionSolver(SolverConfig()).solve_constrained(dataset, classification_spec(0.5, 1.0))


class TestClassificationSolver:
    def test_unconstrained_converges(self, overlapping_classification, small_classification_config):
        model = ClassificationSolver(small_classification_config).solve_unconstrained(overlapping_classification)
        assert np.all(np.isfinite(model.weights))

    def test_constrained_on_sphere(self, overlapping_classification, small_classification_config):
        solver = ClassificationSolver(small_classification_config)
        spec = classification_spec(0.5, 0.8)
        result = solver.solve_constrained(overlapping_classification, spec)
        assert np.linalg.norm(result.model.weights) == pytest.approx(1.0)
        assert result.constraint_value >= 0.8 - small_classification_config.tol_c
        assert not result.certified
        assert solver.constraint_value(overlapping_classification, spec, result.model) == pytest.approx(
            result.constraint_value
        )

    def test_infeasible_above_bound(self, overlapping_classification, small_classification_config):
        solver = ClassificationSolver(small_classification_config)
        spec = classification_spec(0.5, 10.0)
        assert solver.max_attainable_welfare(overlapping_classification, spec) < 10.0
        with pytest.raises(Infeasible):
            solver.solve_constrained(overlapping_classification, spec)
        with pytest.raises(Infeasible):
            solve_constrained_classification(overlapping_classification, spec)

    def test_restart_points_feasible(self, overlapping_classification, small_classification_config):
        solver = ClassificationSolver(small_classification_config)
        spec = classification_spec(0.5, 0.8)
        lagrangian = ClassificationLagrangian(overlapping_classification, spec, small_classification_config)
        points = solver.restart_points(overlapping_classification, lagrangian)
        assert len(points) == small_classification_config.restarts
        np.testing.assert_array_equal(points[0], [0.0, 1.0])
        for point in points:
            assert np.linalg.norm(point) == pytest.approx(1.0)
            assert lagrangian.in_domain(point)


class TestSolverFactory:
    def test_create(self):
        assert isinstance(SolverFactory.create("regression", SolverConfig()), RegressionSolver)
        assert isinstance(SolverFactory.create(Task.CLASSIFICATION, SolverConfig()), ClassificationSolver)

    def test_unsupported(self):
        with pytest.raises(ParameterValidationError):
            SolverFactory.create("ranking", SolverConfig())

    def test_supported_tasks(self):
        assert SolverFactory.get_supported_tasks() == ["regression", "classification"]

    def test_solve_unconstrained(self, realizable):
        dataset, theta = realizable
        np.testing.assert_allclose(solve_unconstrained(dataset).weights, theta.weights, atol=1e-10)


class TestSolverHelpers:
    def test_mean_utility_without_floor(self):
        assert mean_utility(np.array([1.0, 4.0]), 0.5) == pytest.approx(1.5)
        assert mean_utility(np.array([1.0, 0.0]), 0.5) == -np.inf

    def test_mean_utility_with_floor(self):
        assert mean_utility(np.array([4.0, -1.0]), 0.5, floor=0.25) == pytest.approx(1.25)

    def test_predict(self, example_one_dataset):
        model = LinearModel(np.array([1.0, 2.0]))
        np.testing.assert_allclose(predict(model, example_one_dataset), [2.0, 3.0, 4.0, 5.0])
