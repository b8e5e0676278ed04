"""公平性メカニズムの基底クラスと各メカニズムの実装"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

import numpy as np

from ..core.exceptions import ParameterValidationError
from ..models.data_models import Dataset, MechanismKind, MechanismResult, SolverConfig
from .pairwise import dwork_delta_mechanism, epsilon_net_mechanism
from .speicher import speicher_mechanism

logger = logging.getLogger(__name__)


class BaseMechanism(ABC):
    """公平性メカニズムの基底クラス"""

    kind: MechanismKind
    required_params: tuple = ()

    def __init__(self, config: SolverConfig, params: Dict[str, Any]):
        """初期化

        Args:
            config (SolverConfig): ソルバーの設定
            params (Dict[str, Any]): メカニズム固有のパラメータ
        """
        self.config = config
        self.params = params
        self._validate_params()

    def _validate_params(self) -> None:
        """パラメータの検証

        Raises:
            ParameterValidationError: 必須パラメータが不足している場合
        """
        for key in self.required_params:
            if self.params.get(key) is None:
                raise ParameterValidationError(key, f"{self.kind.value} には必須です")

    def _get_param(self, key: str, default: Any = None) -> Any:
        value = self.params.get(key)
        return default if value is None else value

    @abstractmethod
    def run(self, dataset: Dataset, distances: Optional[np.ndarray] = None) -> MechanismResult:
        """メカニズムを実行

        Args:
            dataset (Dataset): 回帰データ
            distances (Optional[np.ndarray]): ペア距離（省略時は |y_i - y_j|）

        Returns:
            MechanismResult: 結果
        """
        pass


class DworkDeltaMechanism(BaseMechanism):
    kind = MechanismKind.DWORK_DELTA
    required_params = ("delta",)

    def run(self, dataset: Dataset, distances: Optional[np.ndarray] = None) -> MechanismResult:
        return dwork_delta_mechanism(dataset, float(self.params["delta"]), distances, self.config)


class EpsilonNetMechanism(BaseMechanism):
    kind = MechanismKind.EPSILON_NET
    required_params = ("epsilon",)

    def run(self, dataset: Dataset, distances: Optional[np.ndarray] = None) -> MechanismResult:
        return epsilon_net_mechanism(dataset, float(self.params["epsilon"]), self.config, distances)


class SpeicherMechanism(BaseMechanism):
    kind = MechanismKind.SPEICHER
    required_params = ("tau",)

    def run(self, dataset: Dataset, distances: Optional[np.ndarray] = None) -> MechanismResult:
        return speicher_mechanism(
            dataset,
            float(self.params["tau"]),
            self._get_param("mu_grid"),
            self.config,
            bool(self._get_param("literal_direction", False)),
        )
