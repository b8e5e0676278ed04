"""CRRA 効用に基づく社会的厚生と不平等指標"""

import logging
import math
from typing import Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

from ..models.data_models import (
    BenefitProfile,
    InequalityParams,
    MeasureKind,
    Ordering,
    RankedModel,
    RankingMeasure,
    WelfareConvention,
    WelfareParams,
)
from .exceptions import LengthMismatch, NonPositiveBenefit, UnsupportedAlpha

logger = logging.getLogger(__name__)

NamedProfiles = Union[Mapping[str, BenefitProfile], Sequence[Tuple[str, BenefitProfile]]]


def _utilities(values: np.ndarray, alpha: float) -> np.ndarray:
    """正の便益ベクトルに CRRA 効用を適用"""
    log_values = np.log(values)
    if alpha == 0:
        return log_values
    powered = np.exp(alpha * log_values)
    return powered if alpha > 0 else -powered


def crra_utility(b: float, alpha: float) -> float:
    """CRRA 効用 u(b)

    α > 0 なら b^α、α = 0 なら ln b、α < 0 なら -b^α

    Raises:
        NonPositiveBenefit: b <= 0 の場合
    """
    if not b > 0:
        raise NonPositiveBenefit(b)
    return float(_utilities(np.array([b], dtype=float), alpha)[0])


def empirical_welfare(profile: BenefitProfile, params: WelfareParams) -> float:
    """効用の平均 U_D（または総和 W_α）"""
    total = math.fsum(_utilities(profile.values, params.alpha).tolist())
    if params.convention == WelfareConvention.SUM:
        return total
    return total / len(profile)


def welfare_curve(profile: BenefitProfile, alphas: Iterable[float]) -> List[float]:
    """α のグリッドに沿った平均厚生"""
    return [empirical_welfare(profile, WelfareParams(alpha)) for alpha in alphas]


def mean_benefit(profile: BenefitProfile) -> float:
    return profile.mean


def _power_mean(values: np.ndarray, exponent: float) -> float:
    if exponent == 0:
        return math.exp(math.fsum(np.log(values).tolist()) / values.size)
    mean = math.fsum(np.exp(exponent * np.log(values)).tolist()) / values.size
    return mean ** (1.0 / exponent)


def _is_constant(profile: BenefitProfile) -> bool:
    return bool(np.all(profile.values == profile.values[0]))


def ede(profile: BenefitProfile, alpha: float) -> float:
    """Equally Distributed Equivalent ((1/n) Σ b_i^α)^{1/α}"""
    if not 0 < alpha < 1:
        raise UnsupportedAlpha(alpha, "EDE は 0 < α < 1 でのみ定義しています")
    if _is_constant(profile):
        return float(profile.values[0])
    return _power_mean(profile.values, alpha)


def atkinson(profile: BenefitProfile, beta: float) -> float:
    """Atkinson 指数 A_β = 1 - EDE/μ

    β = 1 では幾何平均、それ以外では指数 1-β のべき平均を使う。
    """
    if not beta >= 0:
        raise UnsupportedAlpha(beta, "Atkinson 指数には β >= 0 が必要です")
    if _is_constant(profile):
        return 0.0
    equivalent = _power_mean(profile.values, 1.0 - beta)
    return min(max(0.0, 1.0 - equivalent / profile.mean), math.nextafter(1.0, 0.0))


def generalized_entropy(profile: BenefitProfile, alpha: float) -> float:
    """一般化エントロピー G_α = (1/(nα(α-1))) Σ [(b_i/μ)^α - 1]"""
    if alpha in (0, 1):
        raise UnsupportedAlpha(alpha, "一般化エントロピーは α ∈ {0, 1} を扱いません")
    if _is_constant(profile):
        return 0.0
    ratios = profile.values / profile.mean
    total = math.fsum((np.exp(alpha * np.log(ratios)) - 1.0).tolist())
    return max(0.0, total / (len(profile) * alpha * (alpha - 1.0)))


def inequality_indices(
    profile: BenefitProfile, params: InequalityParams
) -> Tuple[float, float]:
    """(Atkinson 指数, 一般化エントロピー) の組"""
    return atkinson(profile, params.beta), generalized_entropy(profile, params.ge_alpha)


def leximin_compare(a: BenefitProfile, b: BenefitProfile) -> Ordering:
    """昇順に並べたプロファイルを辞書式に比較"""
    if len(a) != len(b):
        raise LengthMismatch("便益プロファイル", len(a), len(b))
    for left, right in zip(np.sort(a.values), np.sort(b.values)):
        if left < right:
            return Ordering.LESS
        if left > right:
            return Ordering.GREATER
    return Ordering.EQUAL


def score_profile(profile: BenefitProfile, measure: RankingMeasure) -> float:
    """順位付け尺度でプロファイルを採点"""
    if measure.kind == MeasureKind.WELFARE:
        return empirical_welfare(profile, WelfareParams(measure.parameter))
    if measure.kind == MeasureKind.ATKINSON:
        return atkinson(profile, measure.parameter)
    return generalized_entropy(profile, measure.parameter)


def rank_models(profiles: NamedProfiles, measure: RankingMeasure) -> List[RankedModel]:
    """モデルを尺度で順位付け

    厚生は降順、不平等指標は昇順。同点は名前順。

    Args:
        profiles: 名前と便益プロファイルの対応
        measure (RankingMeasure): 使用する尺度

    Returns:
        List[RankedModel]: 良い順に並んだ (名前, スコア)

    Raises:
        LengthMismatch: プロファイルの長さが揃っていない場合
    """
    items = list(profiles.items()) if isinstance(profiles, Mapping) else list(profiles)
    if not items:
        return []

    expected = len(items[0][1])
    for name, profile in items:
        if len(profile) != expected:
            raise LengthMismatch(f"プロファイル '{name}'", expected, len(profile))

    sign = -1.0 if measure.kind == MeasureKind.WELFARE else 1.0
    scored = [RankedModel(name, score_profile(profile, measure)) for name, profile in items]
    ranked = sorted(scored, key=lambda entry: (sign * entry.score, entry.name))
    logger.debug(f"{measure.label} による順位: {[entry.name for entry in ranked]}")
    return ranked
