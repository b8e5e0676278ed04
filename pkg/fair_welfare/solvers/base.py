"""厚生制約付き学習ソルバーの基底クラスを提供するモジュール"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ..core.exceptions import Infeasible, ParameterValidationError
from ..models.data_models import (
    ConstraintSpec,
    Dataset,
    LinearModel,
    SolveResult,
    SolverConfig,
    Task,
)

logger = logging.getLogger(__name__)


def mean_utility(benefits: np.ndarray, alpha: float, floor: Optional[float] = None) -> float:
    """(1/n) Σ b_i^α。floor がなく便益が 0 以下なら -inf（実行不可能）"""
    if floor is not None:
        benefits = np.maximum(benefits, floor)
    elif not np.all(benefits > 0):
        return -math.inf
    return math.fsum(np.exp(alpha * np.log(benefits)).tolist()) / benefits.size


def predict(model: LinearModel, dataset: Dataset) -> np.ndarray:
    """θ·x_i"""
    return model.predict(dataset.features)


class BaseWelfareSolver(ABC):
    """厚生制約付き学習ソルバーの基底クラス"""

    task: Task

    def __init__(self, config: SolverConfig):
        """初期化

        Args:
            config (SolverConfig): ソルバーの設定
        """
        self.config = config
        self._validate_config()

    def _validate_config(self) -> None:
        """設定の検証

        Raises:
            ParameterValidationError: 設定の型が不正な場合
        """
        if not isinstance(self.config, SolverConfig):
            raise ParameterValidationError("config", "SolverConfig である必要があります")

    def _check_task(self, dataset: Dataset) -> None:
        if dataset.task != self.task:
            raise ParameterValidationError(
                "task", f"{self.task.value} 用のソルバーに {dataset.task.value} のデータが渡されました"
            )
        if dataset.n < dataset.k:
            logger.warning(f"インスタンス数 {dataset.n} が次元 {dataset.k} より少ないです")

    @abstractmethod
    def solve_unconstrained(self, dataset: Dataset) -> LinearModel:
        """損失のみを最小化

        Args:
            dataset (Dataset): 学習データ

        Returns:
            LinearModel: 最小化したモデル

        Raises:
            NonConvergence: max_inner 回で収束しない場合
        """
        pass

    @abstractmethod
    def solve_constrained(self, dataset: Dataset, spec: ConstraintSpec) -> SolveResult:
        """平均厚生 >= τ の制約下で損失を最小化

        Args:
            dataset (Dataset): 学習データ
            spec (ConstraintSpec): 厚生制約

        Returns:
            SolveResult: 解と双対変数・診断情報

        Raises:
            Infeasible: 制約を満たす解が見つからない場合
            DomainCollapse: 便益を下限以上に保てない場合
        """
        pass

    @abstractmethod
    def constraint_value(
        self, dataset: Dataset, spec: ConstraintSpec, model: LinearModel
    ) -> float:
        """モデルでの平均厚生"""
        pass

    @abstractmethod
    def loss(self, dataset: Dataset, model: LinearModel) -> float:
        """モデルでの平均損失"""
        pass

    def max_attainable_welfare(self, dataset: Dataset, spec: ConstraintSpec) -> float:
        """到達可能な平均厚生の上界（既定では上界なし）"""
        return math.inf

    def _prefilter(self, dataset: Dataset, spec: ConstraintSpec) -> None:
        """τ が到達可能な上界を超えていれば二分探索の前に打ち切る"""
        bound = self.max_attainable_welfare(dataset, spec)
        if spec.tau > bound:
            logger.warning(f"τ={spec.tau} は到達可能な平均厚生の上界 {bound:.6g} を超えています")
            raise Infeasible(spec.tau, f"上界 {bound:.6g} を超えています")
