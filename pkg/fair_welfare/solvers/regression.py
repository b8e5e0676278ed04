"""厚生制約付き線形回帰"""

import logging
import math
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ..core.exceptions import DomainCollapse, LambdaOverflow, NonConvergence, ParameterValidationError
from ..models.data_models import (
    ConstraintSpec,
    Dataset,
    LabelDomain,
    LinearModel,
    MinimizeResult,
    SolveResult,
    SolverConfig,
    SolveStatus,
    Task,
)
from ..optim.dual import DualBisection
from ..optim.line_search import minimize_smooth
from .base import BaseWelfareSolver, mean_utility

logger = logging.getLogger(__name__)

BOUNDARY_FTOL = 1e-12


class RegressionLagrangian:
    """Σ r_i² - λ Σ b_i^α（b_i = θ·x_i - y_i + 1）の λ ごとの最小化

    定義域は b_i >= ε_b。最小解が定義域の外にある λ では、
    ε_b の下限を線形不等式制約として SLSQP で解き直す。
    """

    def __init__(self, dataset: Dataset, spec: ConstraintSpec, config: SolverConfig):
        self.features = dataset.features
        self.labels = dataset.labels
        self.alpha = spec.alpha
        self.floor = spec.benefit.floor
        self.config = config
        self.least_squares = np.linalg.lstsq(self.features, self.labels, rcond=None)[0]
        self.loss_scale = 1.0 + float(np.linalg.norm(2.0 * self.features.T @ self.labels))

    def benefits(self, theta: np.ndarray) -> np.ndarray:
        return self.features @ theta - self.labels + 1.0

    def mean_welfare(self, theta: np.ndarray) -> float:
        return mean_utility(self.benefits(theta), self.alpha, self.floor)

    def in_domain(self, theta: np.ndarray) -> bool:
        return bool(np.min(self.benefits(theta)) >= self.config.benefit_floor)

    def max_step(self, theta: np.ndarray, direction: np.ndarray) -> float:
        """すべての便益を ε_b 以上に保てる最大のステップ幅"""
        change = self.features @ direction
        shrinking = change < 0
        if not np.any(shrinking):
            return math.inf
        room = self.benefits(theta)[shrinking] - self.config.benefit_floor
        return float(np.min(np.maximum(room, 0.0) / -change[shrinking]))

    def interior_start(self) -> np.ndarray:
        """最小二乗解の切片をずらして全員の便益を 1 以上にした点"""
        theta = self.least_squares.copy()
        shortfall = 1.0 - float(np.min(self.benefits(theta)))
        if shortfall > 0:
            theta[-1] += shortfall
        return theta

    def solve(self, lam: float, start: Optional[np.ndarray]) -> MinimizeResult:
        """λ を固定した罰則付き問題を減衰ニュートン法で解く"""
        features, labels, alpha = self.features, self.labels, self.alpha
        if lam == 0:
            if not self.in_domain(self.least_squares):
                logger.debug("最小二乗解が便益の下限を破るため、下限付きの最小二乗を解きます")
                return self.solve_on_boundary(0.0, None)
            residual = features @ self.least_squares - labels
            gradient = 2.0 * features.T @ residual
            return MinimizeResult(
                self.least_squares, float(residual @ residual), float(np.linalg.norm(gradient)), 0
            )

        def value(theta: np.ndarray) -> float:
            residual = features @ theta - labels
            benefit = residual + 1.0
            return math.fsum((residual * residual).tolist()) - lam * math.fsum(
                np.exp(alpha * np.log(benefit)).tolist()
            )

        def gradient(theta: np.ndarray) -> np.ndarray:
            residual = features @ theta - labels
            benefit = residual + 1.0
            return 2.0 * features.T @ residual - lam * alpha * features.T @ benefit ** (alpha - 1.0)

        def hessian(theta: np.ndarray) -> np.ndarray:
            benefit = features @ theta - labels + 1.0
            weights = 2.0 + lam * alpha * (1.0 - alpha) * benefit ** (alpha - 2.0)
            return (features * weights[:, None]).T @ features

        x0 = start if start is not None and self.in_domain(start) else self.interior_start()
        try:
            return minimize_smooth(
                value,
                gradient,
                x0,
                tol_g=self.config.tol_g,
                max_iter=self.config.max_inner,
                hessian=hessian,
                in_domain=self.in_domain,
                floor=self.config.benefit_floor,
                scale=self.loss_scale,
                max_step=self.max_step,
            )
        except (DomainCollapse, NonConvergence) as e:
            logger.debug(f"λ={lam:g} のニュートン法が失敗したため下限付きで解き直します: {str(e)}")
            return self.solve_on_boundary(lam, x0)

    def solve_on_boundary(self, lam: float, start: Optional[np.ndarray]) -> MinimizeResult:
        """b_i >= ε_b を制約に加えて罰則付き問題を SLSQP で解く

        Raises:
            NonConvergence: SLSQP が有限の解を返さない場合
        """
        features, labels, alpha = self.features, self.labels, self.alpha
        floor = self.config.benefit_floor
        n = labels.size

        def value(theta: np.ndarray) -> float:
            residual = features @ theta - labels
            benefit = np.maximum(residual + 1.0, floor)
            return (float(residual @ residual) - lam * float(np.sum(benefit**alpha))) / n

        def gradient(theta: np.ndarray) -> np.ndarray:
            residual = features @ theta - labels
            benefit = np.maximum(residual + 1.0, floor)
            return (2.0 * features.T @ residual - lam * alpha * features.T @ benefit ** (alpha - 1.0)) / n

        x0 = start if start is not None and self.in_domain(start) else self.interior_start()
        result = minimize(
            value,
            x0,
            jac=gradient,
            method="SLSQP",
            constraints=[
                {
                    "type": "ineq",
                    "fun": lambda theta: self.benefits(theta) - floor,
                    "jac": lambda theta: features,
                }
            ],
            options={"ftol": BOUNDARY_FTOL, "maxiter": self.config.max_inner},
        )
        theta = np.array(result.x, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise NonConvergence(int(result.nit), math.nan, f"SLSQP: {result.message}")
        if not result.success:
            logger.warning(f"下限付きの最小化が終了条件を満たしていません（λ={lam:g}）: {result.message}")
        shortfall = floor - float(np.min(self.benefits(theta)))
        if shortfall > 0:
            theta[-1] += shortfall
        return MinimizeResult(
            theta,
            n * value(theta),
            n * float(np.linalg.norm(gradient(theta))),
            int(result.nit),
            on_boundary=True,
        )


class RegressionSolver(BaseWelfareSolver):
    """二乗損失の線形回帰ソルバー"""

    task = Task.REGRESSION

    def solve_unconstrained(self, dataset: Dataset) -> LinearModel:
        self._check_task(dataset)
        features, labels = dataset.features, dataset.labels
        theta = np.linalg.lstsq(features, labels, rcond=None)[0]
        gradient_norm = float(np.linalg.norm(2.0 * features.T @ (features @ theta - labels)))
        scale = 1.0 + float(np.linalg.norm(2.0 * features.T @ labels))
        if gradient_norm > self.config.tol_g * scale:
            raise NonConvergence(1, gradient_norm, "最小二乗解の勾配が許容値を超えています")
        return LinearModel(theta)

    def constraint_value(
        self, dataset: Dataset, spec: ConstraintSpec, model: LinearModel
    ) -> float:
        benefits = model.predict(dataset.features) - dataset.labels + 1.0
        return mean_utility(benefits, spec.alpha, spec.benefit.floor)

    def loss(self, dataset: Dataset, model: LinearModel) -> float:
        residual = model.predict(dataset.features) - dataset.labels
        return math.fsum((residual * residual).tolist()) / dataset.n

    def solve_constrained(self, dataset: Dataset, spec: ConstraintSpec) -> SolveResult:
        self._check_task(dataset)
        if spec.benefit.label_domain != LabelDomain.CONTINUOUS:
            raise ParameterValidationError("benefit", "回帰には b = ŷ - y + 1 の便益を使います")
        logger.info(f"回帰の制約付き学習を開始（α={spec.alpha}, τ={spec.tau}）")

        lagrangian = RegressionLagrangian(dataset, spec, self.config)
        bisection = DualBisection(lagrangian.solve, lagrangian.mean_welfare, self.config)
        try:
            dual = bisection.run(spec.tau)
        except LambdaOverflow as e:
            logger.error(f"回帰の制約付き学習が実行不可能: {str(e)}")
            raise

        model = LinearModel(dual.x)
        result = SolveResult(
            model=model,
            lam=dual.lam,
            constraint_value=dual.constraint_value,
            active=dual.active,
            status=dual.status,
            iterations=dual.outer_iterations,
            inner_gradient_norm=dual.gradient_norm,
            loss=self.loss(dataset, model),
            certified=dual.status == SolveStatus.OPTIMAL and not dual.on_boundary,
        )
        logger.info(
            f"回帰の制約付き学習が完了: λ={result.lam:.6g}, 平均厚生={result.constraint_value:.6g}, "
            f"状態={result.status.value}"
        )
        return result


def solve_constrained_regression(
    dataset: Dataset, spec: ConstraintSpec, config: Optional[SolverConfig] = None
) -> SolveResult:
    """厚生制約付き回帰を解く"""
    return RegressionSolver(config or SolverConfig()).solve_constrained(dataset, spec)
