"""単位球面上の厚生制約付きロジスティック回帰"""

import logging
import math
from typing import List, Optional

import numpy as np
from scipy.special import expit, log_expit

from ..core.benefits import label_coefficients
from ..core.datakit import make_generator
from ..core.exceptions import (
    DomainCollapse,
    Infeasible,
    NonConvergence,
    ParameterValidationError,
)
from ..models.data_models import (
    ConstraintSpec,
    Dataset,
    LinearModel,
    MinimizeResult,
    SolveResult,
    SolverConfig,
    SolveStatus,
    Task,
)
from ..optim.dual import DualBisection
from ..optim.line_search import minimize_on_sphere, minimize_smooth
from .base import BaseWelfareSolver, mean_utility

logger = logging.getLogger(__name__)

RESTART_BLEND = 1.0
MAX_BLEND_HALVINGS = 30


def _logistic_loss(features: np.ndarray, labels: np.ndarray, theta: np.ndarray) -> float:
    margins = labels * (features @ theta)
    return -math.fsum(log_expit(margins).tolist()) / labels.size


def _logistic_gradient(features: np.ndarray, labels: np.ndarray, theta: np.ndarray) -> np.ndarray:
    margins = labels * (features @ theta)
    return -(features.T @ (labels * expit(-margins))) / labels.size


class ClassificationLagrangian:
    """(1/n) Σ log(1 + exp(-y_i θ·x_i)) - λ (1/n) Σ b(y_i, θ·x_i/c)^α の球面上の最小化"""

    def __init__(self, dataset: Dataset, spec: ConstraintSpec, config: SolverConfig):
        self.features = dataset.features
        self.labels = dataset.labels
        self.alpha = spec.alpha
        self.scale_c = spec.scale_c
        self.floor = spec.benefit.floor
        self.config = config
        self.slope, self.offset = label_coefficients(spec.benefit, dataset.labels)
        self.start: Optional[np.ndarray] = None

    def benefits(self, theta: np.ndarray) -> np.ndarray:
        return self.slope * (self.features @ theta) / self.scale_c + self.offset

    def mean_welfare(self, theta: np.ndarray) -> float:
        return mean_utility(self.benefits(theta), self.alpha, self.floor)

    def in_domain(self, theta: np.ndarray) -> bool:
        return bool(np.min(self.benefits(theta)) >= self.config.benefit_floor)

    def loss(self, theta: np.ndarray) -> float:
        return _logistic_loss(self.features, self.labels, theta)

    def solve(self, lam: float, start: Optional[np.ndarray]) -> MinimizeResult:
        """λ を固定した罰則付き問題を球面上で解く"""
        features, labels, alpha, n = self.features, self.labels, self.alpha, self.labels.size

        def value(theta: np.ndarray) -> float:
            total = self.loss(theta)
            if lam > 0:
                total -= lam * math.fsum(np.exp(alpha * np.log(self.benefits(theta))).tolist()) / n
            return total

        def gradient(theta: np.ndarray) -> np.ndarray:
            grad = _logistic_gradient(features, labels, theta)
            if lam > 0:
                weights = self.slope * self.benefits(theta) ** (alpha - 1.0)
                grad = grad - lam * alpha / (n * self.scale_c) * (features.T @ weights)
            return grad

        in_domain = self.in_domain if lam > 0 else None
        x0 = self.start
        if start is not None and (in_domain is None or in_domain(start)):
            x0 = start
        return minimize_on_sphere(
            value,
            gradient,
            x0,
            tol_g=self.config.tol_g,
            max_iter=self.config.max_inner,
            in_domain=in_domain,
            floor=self.config.benefit_floor,
        )


class ClassificationSolver(BaseWelfareSolver):
    """ロジスティック損失の線形分類ソルバー（±1 ラベル）"""

    task = Task.CLASSIFICATION

    def _check_task(self, dataset: Dataset) -> None:
        super()._check_task(dataset)
        if not np.isin(dataset.labels, (-1.0, 1.0)).all():
            raise ParameterValidationError("labels", "分類ラベルは ±1 である必要があります")

    def solve_unconstrained(self, dataset: Dataset) -> LinearModel:
        """球面制約なしのロジスティック回帰（ニュートン法）"""
        self._check_task(dataset)
        features, labels = dataset.features, dataset.labels

        def hessian(theta: np.ndarray) -> np.ndarray:
            p = expit(features @ theta)
            return (features * (p * (1.0 - p))[:, None]).T @ features / labels.size

        result = minimize_smooth(
            lambda theta: _logistic_loss(features, labels, theta),
            lambda theta: _logistic_gradient(features, labels, theta),
            np.zeros(dataset.k),
            tol_g=self.config.tol_g,
            max_iter=self.config.max_inner,
            hessian=hessian,
        )
        return LinearModel(result.x)

    def constraint_value(
        self, dataset: Dataset, spec: ConstraintSpec, model: LinearModel
    ) -> float:
        return ClassificationLagrangian(dataset, spec, self.config).mean_welfare(model.weights)

    def loss(self, dataset: Dataset, model: LinearModel) -> float:
        return _logistic_loss(dataset.features, dataset.labels, model.weights)

    def max_attainable_welfare(self, dataset: Dataset, spec: ConstraintSpec) -> float:
        """Cauchy–Schwarz による上界 (1/n) Σ u(|c_y| ‖x_i‖/c + d_y)"""
        slope, offset = label_coefficients(spec.benefit, dataset.labels)
        norms = np.linalg.norm(dataset.features, axis=1)
        best = np.abs(slope) * norms / spec.scale_c + offset
        return mean_utility(best, spec.alpha, spec.benefit.floor)

    def restart_points(self, dataset: Dataset, lagrangian: ClassificationLagrangian) -> List[np.ndarray]:
        """e_k と、e_k の方へ寄せた乱数方向からなる初期点"""
        base = np.zeros(dataset.k)
        base[-1] = 1.0
        points = [base]
        rng = make_generator(self.config.seed)
        for _ in range(self.config.restarts - 1):
            direction = rng.standard_normal(dataset.k)
            blend = RESTART_BLEND
            for _ in range(MAX_BLEND_HALVINGS):
                candidate = base + blend * direction / np.linalg.norm(direction)
                candidate /= np.linalg.norm(candidate)
                if lagrangian.in_domain(candidate):
                    points.append(candidate)
                    break
                blend *= 0.5
        return points

    def solve_constrained(self, dataset: Dataset, spec: ConstraintSpec) -> SolveResult:
        """複数の初期点から λ 二分探索付き射影勾配法を実行し、損失最小のものを返す

        球面制約が非凸のため結果は certified=False。
        """
        self._check_task(dataset)
        logger.info(f"分類の制約付き学習を開始（α={spec.alpha}, τ={spec.tau}, c={spec.scale_c}）")
        self._prefilter(dataset, spec)

        lagrangian = ClassificationLagrangian(dataset, spec, self.config)
        best: Optional[SolveResult] = None
        failures = []
        for run, start in enumerate(self.restart_points(dataset, lagrangian)):
            lagrangian.start = start
            bisection = DualBisection(lagrangian.solve, lagrangian.mean_welfare, self.config)
            try:
                dual = bisection.run(spec.tau)
            except (Infeasible, DomainCollapse, NonConvergence) as e:
                logger.debug(f"リスタート {run} が失敗: {str(e)}")
                failures.append(str(e))
                continue

            model = LinearModel(dual.x)
            candidate = SolveResult(
                model=model,
                lam=dual.lam,
                constraint_value=dual.constraint_value,
                active=dual.active,
                status=dual.status,
                iterations=dual.outer_iterations,
                inner_gradient_norm=dual.gradient_norm,
                loss=lagrangian.loss(dual.x),
                certified=False,
            )
            logger.debug(
                f"リスタート {run}: 損失={candidate.loss:.6g}, λ={candidate.lam:.6g}, "
                f"平均厚生={candidate.constraint_value:.6g}"
            )
            if best is None or candidate.loss < best.loss:
                best = candidate

        if best is None:
            logger.error(f"すべてのリスタートで制約を満たせませんでした（τ={spec.tau}）")
            raise Infeasible(spec.tau, failures[-1] if failures else "")

        if best.status != SolveStatus.OPTIMAL:
            logger.warning("分類の解は制約の許容幅を満たしていません")
        logger.warning("分類の制約付き学習は非凸のため最適性は保証されません")
        logger.info(
            f"分類の制約付き学習が完了: 損失={best.loss:.6g}, λ={best.lam:.6g}, "
            f"平均厚生={best.constraint_value:.6g}"
        )
        return best


def solve_constrained_classification(
    dataset: Dataset, spec: ConstraintSpec, config: Optional[SolverConfig] = None
) -> SolveResult:
    """厚生制約付き分類を解く"""
    return ClassificationSolver(config or SolverConfig()).solve_constrained(dataset, spec)
