"""予測・ラベル・グループ所属から公平性指標を計算するモジュール"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ..models.data_models import (
    Dataset,
    DistanceMode,
    DistanceSpec,
    ErrorRateKind,
    GroupAssignment,
    MetricSpecs,
    MetricsReport,
    ResidualSign,
    Task,
)
from .benefits import build_profile
from .exceptions import (
    DegenerateData,
    EmptyGroup,
    LengthMismatch,
    ParameterValidationError,
    UndefinedRate,
)
from .welfare import atkinson, empirical_welfare, generalized_entropy

logger = logging.getLogger(__name__)

GROUP_NAMES = ("G1", "G2")


def hard_predictions(scores: Sequence[float]) -> np.ndarray:
    """符号で ±1 ラベルに変換（sign(0) = +1）"""
    scores = np.asarray(scores, dtype=float)
    return np.where(scores >= 0, 1.0, -1.0)


def to_binary01(labels: Sequence[float]) -> np.ndarray:
    """±1 ラベルを {0, 1} に写す"""
    return (np.asarray(labels, dtype=float) > 0).astype(float)


def _as_points(values: Sequence[float]) -> np.ndarray:
    points = np.asarray(values, dtype=float)
    return points.reshape(-1, 1) if points.ndim == 1 else points


def _check_length(what: str, expected: int, values: np.ndarray) -> None:
    if values.shape[0] != expected:
        raise LengthMismatch(what, expected, values.shape[0])


# --- 距離 -----------------------------------------------------------------


def _max_distance(points: np.ndarray, block_cap: int) -> float:
    largest = 0.0
    for start in range(0, points.shape[0], block_cap):
        block = cdist(points[start : start + block_cap], points)
        largest = max(largest, float(block.max()))
    return largest


def pairwise_distances(values: Sequence[float], spec: DistanceSpec) -> np.ndarray:
    """対称な n×n 距離行列

    normalized_euclidean では特徴量のユークリッド距離を最大距離で割る。
    label_distance では |y_i - y_j|。
    行列全体を確保するため、メモリを抑えるなら dwork_violation_blocked を使う。

    Raises:
        DegenerateData: n < 2、または normalized_euclidean で全点が同一の場合
    """
    points = _as_points(values)
    n = points.shape[0]
    if n < 2:
        raise DegenerateData(f"距離には2点以上が必要です（n={n}）")

    distances = cdist(points, points)

    if spec.mode == DistanceMode.NORMALIZED_EUCLIDEAN:
        largest = float(distances.max())
        if largest == 0:
            raise DegenerateData("すべての点が同一のため正規化できません")
        distances /= largest
    np.fill_diagonal(distances, 0.0)
    return distances


def dwork_violation(predictions: Sequence[float], distances: np.ndarray) -> float:
    """(2/(n(n-1))) Σ_{i<j} max{0, |ŷ_i - ŷ_j| - d(i, j)}"""
    predictions = np.asarray(predictions, dtype=float)
    distances = np.asarray(distances, dtype=float)
    n = predictions.size
    if distances.shape != (n, n):
        raise LengthMismatch("距離行列", n, distances.shape[0])
    if n < 2:
        return 0.0

    upper = np.triu_indices(n, k=1)
    gaps = np.abs(predictions[:, None] - predictions[None, :])[upper] - distances[upper]
    return 2.0 * math.fsum(np.maximum(gaps, 0.0).tolist()) / (n * (n - 1))


def dwork_violation_blocked(
    predictions: Sequence[float], values: Sequence[float], spec: DistanceSpec
) -> float:
    """n×n 行列を持たずに行ブロックごとに Dwork 違反を集計"""
    predictions = np.asarray(predictions, dtype=float)
    points = _as_points(values)
    n = predictions.size
    _check_length("距離の入力", n, points)
    if n < 2:
        return 0.0

    scale = 1.0
    if spec.mode == DistanceMode.NORMALIZED_EUCLIDEAN:
        scale = _max_distance(points, spec.block_cap)
        if scale == 0:
            raise DegenerateData("すべての点が同一のため正規化できません")

    partials = []
    for start in range(0, n, spec.block_cap):
        stop = min(start + spec.block_cap, n)
        block = cdist(points[start:stop], points) / scale
        gaps = np.abs(predictions[start:stop, None] - predictions[None, :]) - block
        rows, cols = np.nonzero(np.arange(start, stop)[:, None] < np.arange(n)[None, :])
        partials.append(math.fsum(np.maximum(gaps[rows, cols], 0.0).tolist()))
    return 2.0 * math.fsum(partials) / (n * (n - 1))


# --- グループ指標 -----------------------------------------------------------


def _group_values(values: np.ndarray, groups: GroupAssignment) -> List[np.ndarray]:
    _check_length("グループ列", len(groups), values)
    parts = []
    for group, name in enumerate(GROUP_NAMES):
        part = values[groups.mask(group)]
        if part.size == 0:
            raise EmptyGroup(name)
        parts.append(part)
    return parts


def demographic_parity_diff(predictions: Sequence[float], groups: GroupAssignment) -> float:
    """グループ間の陽性予測率の差の絶対値"""
    predictions = np.asarray(predictions, dtype=float)
    if not np.isin(predictions, (-1.0, 1.0)).all():
        raise ParameterValidationError("predictions", "±1 のラベルである必要があります")
    first, second = _group_values(predictions, groups)
    return abs(float(np.mean(first == 1.0)) - float(np.mean(second == 1.0)))


def error_rate_diff(
    kind: ErrorRateKind,
    predictions: Sequence[float],
    labels: Sequence[float],
    groups: GroupAssignment,
) -> float:
    """偽陽性率または偽陰性率のグループ間差

    Raises:
        UndefinedRate: グループに条件となるラベルが1件もない場合
    """
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _check_length("ラベル", predictions.size, labels)
    conditioning = -1.0 if kind == ErrorRateKind.FPR else 1.0

    rates = []
    for (pred, truth), name in zip(
        zip(_group_values(predictions, groups), _group_values(labels, groups)), GROUP_NAMES
    ):
        condition = truth == conditioning
        if not condition.any():
            raise UndefinedRate(kind.value, name)
        rates.append(float(np.mean(pred[condition] == -conditioning)))
    return abs(rates[0] - rates[1])


def mean_diff(predictions: Sequence[float], groups: GroupAssignment) -> float:
    """グループ間の予測平均の差の絶対値"""
    first, second = _group_values(np.asarray(predictions, dtype=float), groups)
    return abs(math.fsum(first.tolist()) / first.size - math.fsum(second.tolist()) / second.size)


def residual_diff(
    sign: ResidualSign,
    predictions: Sequence[float],
    labels: Sequence[float],
    groups: GroupAssignment,
    flags: Optional[List[str]] = None,
) -> float:
    """正（過大予測）または負（過小予測）の残差平均のグループ間差

    各グループの残差は厳密に違反しているメンバー数で割る。
    違反メンバーがいないグループは 0 とし、flags があればその旨を追記する。
    """
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _check_length("ラベル", predictions.size, labels)
    residuals = predictions - labels
    if sign == ResidualSign.NEGATIVE:
        residuals = -residuals

    means = []
    for part, name in zip(_group_values(residuals, groups), GROUP_NAMES):
        violating = part[part > 0]
        if violating.size == 0:
            if flags is not None:
                flags.append(f"{sign.value}_residual_empty_{name}")
            means.append(0.0)
        else:
            means.append(math.fsum(violating.tolist()) / violating.size)
    return abs(means[0] - means[1])


# --- 損失 -----------------------------------------------------------------


def squared_loss(predictions: Sequence[float], labels: Sequence[float]) -> float:
    """平均二乗誤差"""
    residuals = np.asarray(predictions, dtype=float) - np.asarray(labels, dtype=float)
    return math.fsum((residuals * residuals).tolist()) / residuals.size


def logistic_loss(scores: Sequence[float], labels: Sequence[float]) -> float:
    """平均ロジスティック損失 (1/n) Σ log(1 + exp(-y_i s_i))"""
    margins = np.asarray(labels, dtype=float) * np.asarray(scores, dtype=float)
    return math.fsum(np.logaddexp(0.0, -margins).tolist()) / margins.size


def accuracy(predictions: Sequence[float], labels: Sequence[float]) -> float:
    """ハードラベルの正解率"""
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    return float(np.mean(predictions == labels))


# --- レポート -------------------------------------------------------------


def full_report(
    dataset: Dataset,
    predictions: Sequence[float],
    groups: Optional[GroupAssignment],
    specs: MetricSpecs,
) -> MetricsReport:
    """すべての指標をまとめたレポートを作成

    分類では predictions をスコア θ·x として受け取り、sign でハードラベルにする。
    Dwork 違反・平均差・残差差はハードラベルを {0, 1} に写した値で計算する。

    Args:
        dataset (Dataset): 正解ラベルと特徴量
        predictions: 回帰の予測値または分類のスコア
        groups (Optional[GroupAssignment]): グループ所属（なければグループ指標は省略）
        specs (MetricSpecs): 便益・厚生・不平等・距離の設定

    Returns:
        MetricsReport: 指標一式

    Raises:
        DegenerateData: Dwork 違反の距離が定義できない場合（block_cap によらない）
    """
    scores = np.asarray(predictions, dtype=float)
    labels = dataset.labels
    _check_length("予測", dataset.n, scores)
    flags: List[str] = []

    if dataset.task == Task.CLASSIFICATION:
        hard = hard_predictions(scores)
        loss = logistic_loss(scores, labels)
        acc: Optional[float] = accuracy(hard, labels)
        benefit_inputs = hard
        continuous, continuous_labels = to_binary01(hard), to_binary01(labels)
    else:
        loss = squared_loss(scores, labels)
        acc = None
        benefit_inputs = scores
        continuous, continuous_labels = scores, labels

    profile = build_profile(benefit_inputs, labels, specs.benefit)

    distance_source = (
        dataset.features
        if specs.distance.mode == DistanceMode.NORMALIZED_EUCLIDEAN
        else labels
    )
    if dataset.n > specs.distance.block_cap:
        dwork = dwork_violation_blocked(continuous, distance_source, specs.distance)
    else:
        dwork = dwork_violation(continuous, pairwise_distances(distance_source, specs.distance))

    report = MetricsReport(
        loss=loss,
        accuracy=acc,
        welfare=empirical_welfare(profile, specs.welfare),
        atkinson=atkinson(profile, specs.inequality.beta),
        ge=generalized_entropy(profile, specs.inequality.ge_alpha),
        dwork_violation=dwork,
        flags=flags,
    )

    if groups is None:
        flags.append("no_groups")
        return report

    if dataset.task == Task.CLASSIFICATION:
        report.demographic_parity = demographic_parity_diff(hard, groups)
        for kind in ErrorRateKind:
            try:
                value = error_rate_diff(kind, hard, labels, groups)
            except UndefinedRate as e:
                logger.warning(str(e))
                flags.append(f"{kind.value}_undefined")
                value = None
            setattr(report, f"{kind.value}_diff", value)

    report.mean_diff = mean_diff(continuous, groups)
    report.pos_residual_diff = residual_diff(
        ResidualSign.POSITIVE, continuous, continuous_labels, groups, flags
    )
    report.neg_residual_diff = residual_diff(
        ResidualSign.NEGATIVE, continuous, continuous_labels, groups, flags
    )
    return report
