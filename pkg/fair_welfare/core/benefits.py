import logging
from typing import Any, Sequence, Tuple

import numpy as np

from ..models.data_models import (
    BenefitProfile,
    BenefitSpec,
    BinaryBenefitTable,
    LabelDomain,
)
from .exceptions import EmptyProfile, LengthMismatch, NonPositiveBenefit, UnknownLabel

logger = logging.getLogger(__name__)


def evaluate_benefit(spec: BenefitSpec, y: Any, y_hat: float) -> float:
    """1件の便益 b(y, ŷ) = c_y ŷ + d_y を評価

    Args:
        spec (BenefitSpec): 便益関数
        y: 正解ラベル
        y_hat (float): 予測値

    Returns:
        float: 正の便益（floor が設定されていれば floor 以上に切り上げ）

    Raises:
        UnknownLabel: spec に y の係数がない場合
        NonPositiveBenefit: 便益が 0 以下で floor が未設定の場合
    """
    slope, offset = label_coefficients(spec, np.array([y], dtype=float))
    value = float(slope[0] * y_hat + offset[0])
    if spec.floor is not None:
        return max(value, spec.floor)
    if not value > 0:
        raise NonPositiveBenefit(value)
    return value


def label_coefficients(
    spec: BenefitSpec, labels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """インスタンスごとの係数 (c_i, d_i) を返す

    回帰では c_i = 1, d_i = 1 - y_i
    """
    labels = np.asarray(labels, dtype=float)
    if spec.label_domain == LabelDomain.CONTINUOUS:
        return np.ones_like(labels), 1.0 - labels

    slope = np.empty_like(labels)
    offset = np.empty_like(labels)
    for label in np.unique(labels):
        key = float(label)
        if key not in spec.coefficients:
            raise UnknownLabel(key)
        mask = labels == label
        slope[mask], offset[mask] = spec.coefficients[key]
    return slope, offset


def raw_benefits(
    spec: BenefitSpec, predictions: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """検証や切り上げをせずに c_i ŷ_i + d_i を計算"""
    slope, offset = label_coefficients(spec, labels)
    return slope * np.asarray(predictions, dtype=float) + offset


def fit_binary_benefit(
    table: BinaryBenefitTable, label_domain: LabelDomain = LabelDomain.BINARY01
) -> BenefitSpec:
    """4通りの便益の表を再現する線形便益関数を求める

    label_domain が BINARY_PM1 の場合、表の "0" を -1 として読み替え、
    ŷ ∈ {-1, +1} で表の値を再現する係数を返す。

    Args:
        table (BinaryBenefitTable): (y, ŷ) ごとの便益
        label_domain (LabelDomain): ラベルの符号化

    Returns:
        BenefitSpec: 表のすべての値を再現する便益関数
    """
    if not table.ordering_holds():
        logger.warning(
            "便益の表が b̄_10 < b̄_00 <= b̄_11 < b̄_01 を満たしていません: "
            f"{table.to_dict()}"
        )

    if label_domain == LabelDomain.BINARY01:
        coefficients = {
            0.0: (table.b01 - table.b00, table.b00),
            1.0: (table.b11 - table.b10, table.b10),
        }
    elif label_domain == LabelDomain.BINARY_PM1:
        # ŷ = ±1 の2点を通る直線
        coefficients = {
            -1.0: ((table.b01 - table.b00) / 2, (table.b01 + table.b00) / 2),
            1.0: ((table.b11 - table.b10) / 2, (table.b11 + table.b10) / 2),
        }
    else:
        raise ValueError(f"二値ではないラベル定義域です: {label_domain.value}")

    return BenefitSpec(coefficients=coefficients, label_domain=label_domain)


def default_classification_benefit(floor: float = 1e-8) -> BenefitSpec:
    """偽陰性 0・正解 1・偽陽性 1.5 の分類用便益（ラベル ±1）"""
    table = BinaryBenefitTable(b00=1.0, b01=1.5, b10=0.0, b11=1.0)
    return fit_binary_benefit(table, LabelDomain.BINARY_PM1).with_floor(floor)


def build_profile(
    predictions: Sequence[float], labels: Sequence[Any], spec: BenefitSpec
) -> BenefitProfile:
    """予測とラベルから便益プロファイルを作成

    Raises:
        EmptyProfile: 入力が空の場合
        LengthMismatch: 予測とラベルの長さが異なる場合
        NonPositiveBenefit: floor 未設定で便益が 0 以下になる場合（インデックス付き）
    """
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if predictions.size == 0:
        raise EmptyProfile()
    if predictions.shape != labels.shape:
        raise LengthMismatch("予測とラベル", labels.size, predictions.size)

    values = raw_benefits(spec, predictions, labels)
    if spec.floor is not None:
        values = np.maximum(values, spec.floor)
    else:
        bad = np.flatnonzero(~(values > 0))
        if bad.size:
            raise NonPositiveBenefit(float(values[bad[0]]), int(bad[0]))
    return BenefitProfile.from_values(values)


def pareto_dominates(a: BenefitProfile, b: BenefitProfile) -> bool:
    """a_i >= b_i がすべての i で成り立つか"""
    if len(a) != len(b):
        raise LengthMismatch("便益プロファイル", len(a), len(b))
    return bool(np.all(a.values >= b.values))
