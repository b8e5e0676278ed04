"""実現可能なデータでの閉形式解と KKT 残差"""

import logging
from typing import Tuple

import numpy as np

from ..core.exceptions import ParameterValidationError
from ..models.data_models import (
    ConstraintSpec,
    Dataset,
    KKTResiduals,
    LinearModel,
    SolveResult,
    Task,
)
from .base import mean_utility

logger = logging.getLogger(__name__)


def closed_form_realizable(
    theta_star: LinearModel, alpha: float, tau: float
) -> Tuple[LinearModel, float]:
    """y = θ*·x のデータに対する制約付き回帰の閉形式解

    切片を τ^{1/α} - 1 だけ上げたモデルが最適で、
    双対変数は λ' = (2/(ατ)) τ^{1/α} (τ^{1/α} - 1)。

    Args:
        theta_star (LinearModel): データを生成したモデル
        alpha (float): 0 < α < 1
        tau (float): τ > 1

    Returns:
        Tuple[LinearModel, float]: 最適モデルと λ'
    """
    if not 0 < alpha < 1:
        raise ParameterValidationError("alpha", "0 < α < 1 である必要があります")
    if not tau > 1:
        raise ParameterValidationError("tau", "τ > 1 である必要があります")
    level = tau ** (1.0 / alpha)
    shift = level - 1.0
    lam = 2.0 / (alpha * tau) * level * shift
    return theta_star.with_intercept_shift(shift), lam


def loss_gradient_norm_at_zero(dataset: Dataset) -> float:
    """θ = 0 での二乗損失（総和）の勾配ノルム ‖2Xᵀy‖"""
    return float(np.linalg.norm(2.0 * dataset.features.T @ dataset.labels))


def kkt_residuals(
    dataset: Dataset, spec: ConstraintSpec, result: SolveResult
) -> KKTResiduals:
    """制約付き回帰の解に対する KKT 残差

    定常性は Σ 2x_i(θ·x_i - y_i) - λα Σ x_i(θ·x_i - y_i + 1)^{α-1} のノルム。
    主実行可能性と相補性は平均厚生 (1/n) Σ b_i^α と τ で測る。
    """
    if dataset.task != Task.REGRESSION:
        raise ParameterValidationError("task", "KKT 残差は回帰にのみ対応しています")

    features, labels = dataset.features, dataset.labels
    residual = result.model.predict(features) - labels
    benefit = residual + 1.0
    gradient = 2.0 * features.T @ residual
    if result.lam != 0:
        if np.all(benefit > 0):
            gradient = gradient - result.lam * spec.alpha * features.T @ benefit ** (spec.alpha - 1.0)
        else:
            gradient = np.full_like(gradient, np.inf)

    welfare = mean_utility(benefit, spec.alpha, spec.benefit.floor)
    return KKTResiduals(
        stationarity_norm=float(np.linalg.norm(gradient)),
        primal_violation=max(0.0, spec.tau - welfare),
        dual_feasibility=max(0.0, -result.lam),
        complementary_slackness=abs(result.lam * (welfare - spec.tau)) if result.lam else 0.0,
    )
