"""公平性メカニズムを生成するファクトリークラス"""

import logging
from typing import Any, Dict, Union

from ..core.exceptions import ParameterValidationError
from ..models.data_models import MechanismKind, SolverConfig
from .base import BaseMechanism, DworkDeltaMechanism, EpsilonNetMechanism, SpeicherMechanism

logger = logging.getLogger(__name__)


class MechanismFactory:
    """メカニズムファクトリークラス"""

    SUPPORTED_MECHANISMS = {
        MechanismKind.DWORK_DELTA.value: DworkDeltaMechanism,
        MechanismKind.EPSILON_NET.value: EpsilonNetMechanism,
        MechanismKind.SPEICHER.value: SpeicherMechanism,
    }

    @classmethod
    def create(
        cls, kind: Union[str, MechanismKind], config: SolverConfig, params: Dict[str, Any]
    ) -> BaseMechanism:
        """メカニズムインスタンスを生成

        Raises:
            ParameterValidationError: サポートされていない種類の場合
        """
        key = kind.value if isinstance(kind, MechanismKind) else str(kind).lower()

        if key not in cls.SUPPORTED_MECHANISMS:
            supported = ", ".join(cls.SUPPORTED_MECHANISMS.keys())
            raise ParameterValidationError(
                "kind", f"未サポートのメカニズム: {key}. サポートされている種類: {supported}"
            )

        logger.info(f"メカニズム '{key}' を実行します")
        return cls.SUPPORTED_MECHANISMS[key](config, params)

    @classmethod
    def get_supported_mechanisms(cls) -> list:
        """サポートされているメカニズムの一覧を取得"""
        return list(cls.SUPPORTED_MECHANISMS.keys())
