"""数値例と厚生関数の性質をまとめて確認する受け入れテスト"""

import itertools

import numpy as np
import pytest

from conftest import homogeneous
from fair_welfare.config.settings import apply_overrides, get_default_config
from fair_welfare.core.benefits import build_profile, default_classification_benefit
from fair_welfare.core.datakit import gen_realizable, gen_synthetic
from fair_welfare.core.experiment import build_experiment_config
from fair_welfare.core.fairmetrics import dwork_violation, mean_diff, residual_diff
from fair_welfare.core.sweep_manager import SweepManager
from fair_welfare.core.welfare import atkinson, empirical_welfare, generalized_entropy, rank_models
from fair_welfare.logging.log_analyzer import LogAnalyzer
from fair_welfare.logging.log_manager import LogManager
from fair_welfare.mechanisms.speicher import default_mu_grid, speicher_mechanism
from fair_welfare.models.data_models import (
    BenefitProfile,
    BenefitSpec,
    ConstraintSpec,
    Dataset,
    GroupAssignment,
    MeasureKind,
    RankingMeasure,
    ResidualSign,
    Task,
    WelfareParams,
)
from fair_welfare.solvers.kkt import closed_form_realizable, kkt_residuals, loss_gradient_norm_at_zero
from fair_welfare.solvers.regression import solve_constrained_regression

TRIALS = 1000
ALPHAS = (0.2, 0.5, 0.8)


def welfare(values, alpha):
    return empirical_welfare(BenefitProfile.from_values(values), WelfareParams(alpha))


def sign(value, tol=1e-12):
    return 0 if abs(value) <= tol else (1 if value > 0 else -1)


class TestWorkedExamples:
    def test_example_one_welfare(self):
        assert welfare([0.9] * 4, 0.5) == pytest.approx(0.9487, abs=1e-3)
        assert welfare([0.6, 1.0, 1.0, 1.1], 0.5) == pytest.approx(0.9559, abs=1e-3)

    def test_example_one_group_metrics(self):
        predictions = [0.6, 1.0, 1.0, 1.1]
        groups = GroupAssignment.from_values([0, 0, 1, 1])
        assert dwork_violation(predictions, np.zeros((4, 4))) == pytest.approx(0.25, abs=1e-9)
        assert mean_diff(predictions, groups) == pytest.approx(0.25, abs=1e-9)
        assert residual_diff(ResidualSign.NEGATIVE, predictions, np.ones(4), groups, []) == pytest.approx(0.4, abs=1e-9)

    @pytest.mark.parametrize("alpha", [round(0.1 * i, 1) for i in range(1, 10)])
    def test_figure_one_orderings(self, figure_one_profiles, alpha):
        scores = {name: empirical_welfare(p, WelfareParams(alpha)) for name, p in figure_one_profiles.items()}
        assert scores["A"] > scores["B"]
        assert scores["C"] > scores["D"]
        assert scores["D"] > scores["A"]
        ranked = rank_models(figure_one_profiles, RankingMeasure(MeasureKind.WELFARE, alpha))
        assert [entry.name for entry in ranked] == ["C", "D", "A", "B"]

    def test_all_positive_predictions_maximize_welfare(self):
        rng = np.random.default_rng(3)
        labels = rng.choice([-1.0, 1.0], size=10)
        spec = default_classification_benefit()
        best, best_value = None, -np.inf
        for predictions in itertools.product((-1.0, 1.0), repeat=10):
            value = empirical_welfare(build_profile(predictions, labels, spec), WelfareParams(0.5))
            if value > best_value:
                best, best_value = predictions, value
        assert best == (1.0,) * 10


class TestRealizableClosedForm:
    @pytest.fixture(scope="class")
    def data(self):
        return gen_realizable(200, 5, seed=7)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    @pytest.mark.parametrize("tau", [1.5, 2.0, 4.0])
    def test_solver_matches_closed_form(self, data, alpha, tau):
        dataset, theta = data
        spec = ConstraintSpec(alpha=alpha, tau=tau, benefit=BenefitSpec.regression())
        result = solve_constrained_regression(dataset, spec)
        expected, lam = closed_form_realizable(theta, alpha, tau)
        assert np.max(np.abs(result.model.weights - expected.weights)) <= 1e-4
        assert result.lam == pytest.approx(lam, rel=1e-3)
        residuals = kkt_residuals(dataset, spec, result)
        assert residuals.stationarity_norm <= 1e-6 * (1.0 + loss_gradient_norm_at_zero(dataset))
        assert residuals.primal_violation <= 1e-6


class TestOrderingEquivalence:
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_equal_mean_welfare_matches_atkinson(self, alpha):
        rng = np.random.default_rng(21)
        for _ in range(TRIALS):
            a = rng.uniform(0.1, 3.0, size=5)
            b = rng.uniform(0.1, 3.0, size=5)
            b *= a.mean() / b.mean()
            by_welfare = sign(welfare(a, alpha) - welfare(b, alpha))
            pa, pb = BenefitProfile.from_values(a), BenefitProfile.from_values(b)
            by_atkinson = sign(atkinson(pb, 1.0 - alpha) - atkinson(pa, 1.0 - alpha))
            if by_welfare and by_atkinson:
                assert by_welfare == by_atkinson

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_generalized_entropy_matches_atkinson(self, alpha):
        rng = np.random.default_rng(22)
        for _ in range(TRIALS):
            pa = BenefitProfile.from_values(rng.uniform(0.1, 3.0, size=6))
            pb = BenefitProfile.from_values(rng.uniform(0.1, 3.0, size=6))
            by_ge = sign(generalized_entropy(pa, alpha) - generalized_entropy(pb, alpha))
            by_atkinson = sign(atkinson(pa, 1.0 - alpha) - atkinson(pb, 1.0 - alpha))
            if by_ge and by_atkinson:
                assert by_ge == by_atkinson
            g = generalized_entropy(pa, alpha)
            assert atkinson(pa, 1.0 - alpha) == pytest.approx(
                1.0 - (alpha * (alpha - 1.0) * g + 1.0) ** (1.0 / alpha), abs=1e-10
            )


class TestWelfareAxioms:
    @pytest.fixture
    def rng(self):
        return np.random.default_rng(5)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_monotonicity(self, rng, alpha):
        for _ in range(TRIALS):
            b = rng.uniform(0.1, 3.0, size=6)
            raised = b.copy()
            raised[rng.integers(6)] += rng.uniform(0.01, 1.0)
            assert welfare(raised, alpha) > welfare(b, alpha)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_symmetry(self, rng, alpha):
        for _ in range(TRIALS):
            b = rng.uniform(0.1, 3.0, size=6)
            assert welfare(rng.permutation(b), alpha) == pytest.approx(welfare(b, alpha), rel=1e-12)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_independence_of_unconcerned_agents(self, rng, alpha):
        for _ in range(TRIALS):
            a = rng.uniform(0.1, 3.0, size=6)
            b = rng.uniform(0.1, 3.0, size=6)
            first, second = rng.uniform(0.1, 3.0, size=2)
            a[0] = b[0] = first
            before = sign(welfare(a, alpha) - welfare(b, alpha), 1e-9)
            a[0] = b[0] = second
            after = sign(welfare(a, alpha) - welfare(b, alpha), 1e-9)
            if before and after:
                assert before == after

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_scale_independence(self, rng, alpha):
        for _ in range(TRIALS):
            a = rng.uniform(0.1, 3.0, size=6)
            b = rng.uniform(0.1, 3.0, size=6)
            factor = rng.uniform(0.1, 10.0)
            before = sign(welfare(a, alpha) - welfare(b, alpha), 1e-9)
            after = sign(welfare(factor * a, alpha) - welfare(factor * b, alpha), 1e-9)
            if before and after:
                assert before == after

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_pigou_dalton(self, rng, alpha):
        for _ in range(TRIALS):
            b = rng.uniform(0.1, 3.0, size=6)
            poor, rich = np.argmin(b), np.argmax(b)
            gap = b[rich] - b[poor]
            if gap < 1e-3:
                continue
            transfer = rng.uniform(0.05, 0.45) * gap
            moved = b.copy()
            moved[poor] += transfer
            moved[rich] -= transfer
            assert welfare(moved, alpha) > welfare(b, alpha)


class TestDeskScaleTrends:
    def test_sweep_trends(self, tmp_path):
        dataset = gen_synthetic(500, 4, seed=5, task=Task.REGRESSION, noise=0.3, group_shift=0.5)
        config = build_experiment_config(
            apply_overrides(
                get_default_config(),
                {
                    "output_dir": str(tmp_path),
                    "welfare.alphas": [0.5],
                    "welfare.taus": [0.5, 1.0, 1.2, 1.5, 2.0, 3.0],
                    "sweep.jobs": 2,
                },
            )
        )
        rows = SweepManager(config, LogManager(str(tmp_path))).run(dataset)
        assert all(row.status == "optimal" for row in rows)
        assert any(row.lam > 0 for row in rows)
        report = LogAnalyzer(str(tmp_path)).analyze_sweep_trends(
            str(tmp_path / "results.csv"), tol=config.solver.tol_c
        )
        assert report["monotone"], report["alphas"]


def feasible_intercepts(residuals, alpha, tau, floor=1e-8, iterations=200):
    """各傾きで平均効用 >= τ となる最小の切片（ベクトル化した二分法）"""
    low = -residuals.min(axis=1) - 1.0 + floor
    high = low + tau ** (1.0 / alpha) + 10.0

    def utility(shift):
        return np.mean((residuals + shift[:, None] + 1.0) ** alpha, axis=1)

    already = utility(low) >= tau
    for _ in range(iterations):
        middle = 0.5 * (low + high)
        ok = utility(middle) >= tau
        high = np.where(ok, middle, high)
        low = np.where(ok, low, middle)
    return np.where(already, low, high)


class TestSolverAgainstGridSearch:
    @pytest.mark.parametrize("instance", range(20))
    def test_one_dimensional_regression(self, instance):
        rng = np.random.default_rng(100 + instance)
        n = int(rng.integers(3, 6))
        x = rng.uniform(-1.0, 1.0, size=n)
        y = 0.5 * x + rng.normal(0.0, 0.2, size=n)
        alpha = float(rng.uniform(0.2, 0.8))
        tau = float(rng.uniform(1.1, 2.0))
        dataset = Dataset(features=homogeneous(x), labels=y, task=Task.REGRESSION)
        result = solve_constrained_regression(
            dataset, ConstraintSpec(alpha=alpha, tau=tau, benefit=BenefitSpec.regression())
        )

        def best_on(slopes):
            residuals = slopes[:, None] * x[None, :] - y[None, :]
            intercepts = np.maximum(-residuals.mean(axis=1), feasible_intercepts(residuals, alpha, tau))
            losses = np.mean((residuals + intercepts[:, None]) ** 2, axis=1)
            return slopes[np.argmin(losses)], losses.min()

        slope = np.polyfit(x, y, 1)[0]
        coarse, _ = best_on(np.linspace(slope - 3.0, slope + 3.0, 6001))
        _, oracle = best_on(np.linspace(coarse - 2e-3, coarse + 2e-3, 4001))
        assert result.loss == pytest.approx(oracle, abs=1e-3)


class TestSpeicherAgainstGridSearch:
    def test_two_point_instance(self):
        dataset = Dataset(features=homogeneous([0.0, 1.0]), labels=[0.0, 1.0], task=Task.REGRESSION)
        tau = 0.1
        result = speicher_mechanism(dataset, tau)

        best = np.inf
        slopes = np.linspace(-2.0, 4.0, 6001)
        for mu in default_mu_grid(dataset):
            # 平均便益 μ を満たす切片
            intercepts = mu - 0.5 - slopes / 2.0
            benefits = np.stack([intercepts + 1.0, slopes + intercepts], axis=1)
            ge2 = np.mean((benefits / mu) ** 2 - 1.0, axis=1) / 2.0
            losses = np.mean((benefits - 1.0) ** 2, axis=1)
            feasible = (benefits.min(axis=1) > 0) & (ge2 <= tau)
            if feasible.any():
                best = min(best, losses[feasible].min())

        assert result.details["loss"] == pytest.approx(best, abs=1e-3)
        assert result.details["ge2"] <= tau + 1e-6
        benefits = result.model.predict(dataset.features) - dataset.labels + 1.0
        assert benefits.mean() == pytest.approx(result.details["mu"], abs=1e-6)
