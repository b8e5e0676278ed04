"""ペア制約による個人公平性メカニズム（δ マージン、ε-ネット）"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import DegenerateData, NonConvergence, ParameterValidationError
from ..core.fairmetrics import dwork_violation, pairwise_distances
from ..models.data_models import (
    Dataset,
    DistanceMode,
    DistanceSpec,
    LinearModel,
    MechanismResult,
    PairConstraint,
    SolverConfig,
    SolveStatus,
    Task,
)
from ..optim.line_search import minimize_smooth

logger = logging.getLogger(__name__)

PENALTY_START = 1.0
PENALTY_GROWTH = 10.0
PENALTY_ROUNDS = 10


def _require_regression(dataset: Dataset) -> None:
    if dataset.task != Task.REGRESSION:
        raise ParameterValidationError("task", "ペア制約メカニズムは回帰にのみ対応しています")


def label_distances(dataset: Dataset) -> np.ndarray:
    """回帰の既定距離 d(i, j) = |y_i - y_j|"""
    return pairwise_distances(dataset.labels, DistanceSpec(DistanceMode.LABEL_DISTANCE))


def pair_violations(predictions: np.ndarray, pairs: Sequence[PairConstraint]) -> np.ndarray:
    """各ペアの |ŷ_i - ŷ_j| - d(i, j)"""
    if not pairs:
        return np.zeros(0)
    i = np.array([pair.i for pair in pairs])
    j = np.array([pair.j for pair in pairs])
    bounds = np.array([pair.bound for pair in pairs])
    return np.abs(predictions[i] - predictions[j]) - bounds


def max_pairwise_violation(predictions: np.ndarray, distances: np.ndarray) -> float:
    """全ペアに対する最大違反量"""
    n = predictions.size
    if n < 2:
        return 0.0
    upper = np.triu_indices(n, k=1)
    gaps = np.abs(predictions[:, None] - predictions[None, :])[upper] - distances[upper]
    return max(0.0, float(gaps.max()))


def solve_pair_constrained(
    dataset: Dataset,
    pairs: Sequence[PairConstraint],
    config: SolverConfig,
) -> Tuple[LinearModel, Dict[str, float]]:
    """|θ·x_i - θ·x_j| <= d(i, j) を二乗ヒンジ罰則で課した最小二乗

    罰則の重みは 10 倍ずつ最大 10 回強化し、選ばれたペアの違反が
    tol_c 以下になった時点で終了する。

    Returns:
        Tuple[LinearModel, Dict[str, float]]: モデルと罰則の診断情報

    Raises:
        NonConvergence: 強化回数の上限までに違反が tol_c を下回らない場合
    """
    features, labels = dataset.features, dataset.labels
    theta = np.linalg.lstsq(features, labels, rcond=None)[0]
    if not pairs:
        return LinearModel(theta), {"rounds": 0, "rho": 0.0, "selected_max_violation": 0.0}

    left = np.array([pair.i for pair in pairs])
    right = np.array([pair.j for pair in pairs])
    bounds = np.array([pair.bound for pair in pairs])
    differences = features[left] - features[right]
    scale = 1.0 + float(np.linalg.norm(2.0 * features.T @ labels))
    gram = 2.0 * features.T @ features

    rho = PENALTY_START
    for round_number in range(1, PENALTY_ROUNDS + 1):

        def hinge_parts(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            gap = differences @ theta
            return np.maximum(gap - bounds, 0.0), np.maximum(-gap - bounds, 0.0)

        def value(theta: np.ndarray, rho: float = rho) -> float:
            residual = features @ theta - labels
            up, down = hinge_parts(theta)
            return float(residual @ residual + rho * (up @ up + down @ down))

        def gradient(theta: np.ndarray, rho: float = rho) -> np.ndarray:
            up, down = hinge_parts(theta)
            return gram @ theta - 2.0 * features.T @ labels + 2.0 * rho * differences.T @ (up - down)

        def hessian(theta: np.ndarray, rho: float = rho) -> np.ndarray:
            up, down = hinge_parts(theta)
            active = (up > 0) | (down > 0)
            return gram + 2.0 * rho * differences[active].T @ differences[active]

        result = minimize_smooth(
            value,
            gradient,
            theta,
            tol_g=config.tol_g,
            max_iter=config.max_inner,
            hessian=hessian,
            scale=scale,
            accept_rounding_floor=True,
        )
        theta = result.x
        worst = max(0.0, float(np.max(np.abs(differences @ theta) - bounds)))
        logger.debug(f"罰則ラウンド {round_number}: ρ={rho:g}, 最大違反={worst:.3e}")
        if worst <= config.tol_c:
            return LinearModel(theta), {
                "rounds": round_number,
                "rho": rho,
                "selected_max_violation": worst,
            }
        rho *= PENALTY_GROWTH

    raise NonConvergence(
        PENALTY_ROUNDS, result.gradient_norm, f"罰則を強化してもペア違反 {worst:.3e} が残りました"
    )


def _mechanism_result(
    dataset: Dataset,
    model: LinearModel,
    pairs: Sequence[PairConstraint],
    distances: np.ndarray,
    details: Dict,
) -> MechanismResult:
    predictions = model.predict(dataset.features)
    return MechanismResult(
        model=model,
        added_constraints=len(pairs),
        max_violation=max_pairwise_violation(predictions, distances),
        average_violation=dwork_violation(predictions, distances),
        status=SolveStatus.OPTIMAL,
        details=details,
    )


def select_violated_pairs(
    predictions: np.ndarray, distances: np.ndarray, delta: float
) -> List[PairConstraint]:
    """違反量が正かつ δ 以上のペア"""
    n = predictions.size
    upper_i, upper_j = np.triu_indices(n, k=1)
    gaps = np.abs(predictions[upper_i] - predictions[upper_j]) - distances[upper_i, upper_j]
    chosen = (gaps > 0) & (gaps >= delta)
    return [
        PairConstraint(int(i), int(j), float(distances[i, j]))
        for i, j in zip(upper_i[chosen], upper_j[chosen])
    ]


def dwork_delta_mechanism(
    dataset: Dataset,
    delta: float,
    distances: Optional[np.ndarray] = None,
    config: Optional[SolverConfig] = None,
) -> MechanismResult:
    """制約なし ERM で δ 以上違反したペアだけを制約に加えて解き直す

    Args:
        dataset (Dataset): 回帰データ
        delta (float): 違反量のしきい値（0 以上、inf 可）
        distances (Optional[np.ndarray]): 距離行列（省略時は |y_i - y_j|）
        config (Optional[SolverConfig]): ソルバーの設定

    Returns:
        MechanismResult: 結果（違反量は全ペアに対して計算）
    """
    _require_regression(dataset)
    if not delta >= 0:
        raise ParameterValidationError("delta", "0 以上である必要があります")
    config = config or SolverConfig()
    distances = label_distances(dataset) if distances is None else np.asarray(distances, dtype=float)

    initial = np.linalg.lstsq(dataset.features, dataset.labels, rcond=None)[0]
    initial_predictions = dataset.features @ initial
    pairs = select_violated_pairs(initial_predictions, distances, delta)
    logger.info(f"δ={delta:g} で {len(pairs)} 個のペア制約を追加します")

    model, details = solve_pair_constrained(dataset, pairs, config)
    details.update(
        {
            "delta": delta,
            "initial_average_violation": dwork_violation(initial_predictions, distances),
        }
    )
    return _mechanism_result(dataset, model, pairs, distances, details)


def epsilon_net(dataset: Dataset, epsilon: float) -> List[int]:
    """正規化ユークリッド距離での貪欲な最遠点 ε-ネット（最初の点から開始）

    Returns:
        List[int]: 代表点のインデックス（選ばれた順）
    """
    if not epsilon > 0:
        raise ParameterValidationError("epsilon", "正の値である必要があります")
    if dataset.n < 2:
        return [0]
    try:
        distances = pairwise_distances(
            dataset.features, DistanceSpec(DistanceMode.NORMALIZED_EUCLIDEAN)
        )
    except DegenerateData:
        return [0]

    representatives = [0]
    nearest = distances[0].copy()
    while True:
        farthest = int(np.argmax(nearest))
        if nearest[farthest] <= epsilon:
            break
        representatives.append(farthest)
        nearest = np.minimum(nearest, distances[farthest])
    logger.info(f"ε={epsilon:g} の ε-ネット: {len(representatives)} 個の代表点")
    return representatives


def epsilon_net_mechanism(
    dataset: Dataset,
    epsilon: float,
    config: Optional[SolverConfig] = None,
    distances: Optional[np.ndarray] = None,
) -> MechanismResult:
    """ε-ネットの代表点同士のすべてのペアに制約を課した ERM"""
    _require_regression(dataset)
    config = config or SolverConfig()
    distances = label_distances(dataset) if distances is None else np.asarray(distances, dtype=float)

    representatives = sorted(epsilon_net(dataset, epsilon))
    pairs = [
        PairConstraint(i, j, float(distances[i, j]))
        for position, i in enumerate(representatives)
        for j in representatives[position + 1 :]
    ]
    model, details = solve_pair_constrained(dataset, pairs, config)
    details.update({"epsilon": epsilon, "representatives": representatives})
    return _mechanism_result(dataset, model, pairs, distances, details)
