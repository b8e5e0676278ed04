"""タスクに応じたソルバーを生成するファクトリークラス"""

import logging
from typing import Optional, Union

from ..core.exceptions import ParameterValidationError
from ..models.data_models import Dataset, LinearModel, SolverConfig, Task
from .base import BaseWelfareSolver
from .classification import ClassificationSolver
from .regression import RegressionSolver

logger = logging.getLogger(__name__)


class SolverFactory:
    """ソルバーファクトリークラス"""

    # サポートされているタスクの一覧
    SUPPORTED_SOLVERS = {
        Task.REGRESSION.value: RegressionSolver,
        Task.CLASSIFICATION.value: ClassificationSolver,
    }

    @classmethod
    def create(cls, task: Union[str, Task], config: SolverConfig) -> BaseWelfareSolver:
        """ソルバーインスタンスを生成

        Args:
            task (Union[str, Task]): タスクの種類
            config (SolverConfig): ソルバーの設定

        Returns:
            BaseWelfareSolver: ソルバーインスタンス

        Raises:
            ParameterValidationError: サポートされていないタスクの場合
        """
        key = task.value if isinstance(task, Task) else str(task).lower()

        if key not in cls.SUPPORTED_SOLVERS:
            supported = ", ".join(cls.SUPPORTED_SOLVERS.keys())
            raise ParameterValidationError(
                "task", f"未サポートのタスク: {key}. サポートされているタスク: {supported}"
            )

        logger.debug(f"ソルバー '{key}' のインスタンスを生成します")
        return cls.SUPPORTED_SOLVERS[key](config)

    @classmethod
    def get_supported_tasks(cls) -> list:
        """サポートされているタスクの一覧を取得"""
        return list(cls.SUPPORTED_SOLVERS.keys())


def solve_unconstrained(
    dataset: Dataset, task: Optional[Task] = None, config: Optional[SolverConfig] = None
) -> LinearModel:
    """損失のみを最小化したモデル"""
    solver = SolverFactory.create(task or dataset.task, config or SolverConfig())
    return solver.solve_unconstrained(dataset)
