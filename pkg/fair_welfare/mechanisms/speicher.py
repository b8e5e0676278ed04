"""平均便益を固定して一般化エントロピー（α=2）を抑えるメカニズム"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import (
    AllInfeasible,
    Infeasible,
    NonConvergence,
    ParameterValidationError,
)
from ..models.data_models import (
    Dataset,
    LinearModel,
    MechanismResult,
    MinimizeResult,
    SolverConfig,
    SolveStatus,
    Task,
)
from ..optim.dual import DualBisection
from ..optim.line_search import minimize_smooth

logger = logging.getLogger(__name__)

AUGMENTED_START = 10.0
AUGMENTED_GROWTH = 10.0
AUGMENTED_ROUNDS = 12
DEFAULT_GRID_SIZE = 21


def ge2(benefits: np.ndarray, mu: float) -> float:
    """平均 μ に対する G_2 = (1/(2n)) Σ [(b_i/μ)² - 1]"""
    ratios = benefits / mu
    return math.fsum((ratios * ratios - 1.0).tolist()) / (2.0 * benefits.size)


def default_mu_grid(dataset: Dataset, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """最小二乗解の平均便益 × [0.5, 1.5] を等間隔に分割したグリッド"""
    theta = np.linalg.lstsq(dataset.features, dataset.labels, rcond=None)[0]
    base = float(np.mean(dataset.features @ theta - dataset.labels + 1.0))
    return np.linspace(0.5, 1.5, size) * base


class MeanFixedProblem:
    """Σ b_i = nμ の下で Σ r_i² + ν Σ b_i² を最小化する（拡張ラグランジュ法）"""

    def __init__(self, dataset: Dataset, mu: float, config: SolverConfig):
        self.features = dataset.features
        self.labels = dataset.labels
        self.n = dataset.n
        self.mu = mu
        self.config = config
        self.row_sum = self.features.sum(axis=0)
        self.gram = self.features.T @ self.features
        self.scale = 1.0 + float(np.linalg.norm(2.0 * self.features.T @ self.labels))

    def benefits(self, theta: np.ndarray) -> np.ndarray:
        return self.features @ theta - self.labels + 1.0

    def mean_gap(self, theta: np.ndarray) -> float:
        return float(np.mean(self.benefits(theta))) - self.mu

    def negative_ge2(self, theta: np.ndarray) -> float:
        return -ge2(self.benefits(theta), self.mu)

    def solve(self, nu: float, start: Optional[np.ndarray]) -> MinimizeResult:
        """ν を固定し、等式制約を乗数更新と罰則強化で満たす"""
        features, labels, n = self.features, self.labels, self.n
        theta = np.linalg.lstsq(features, labels, rcond=None)[0] if start is None else start
        multiplier = 0.0
        rho = AUGMENTED_START
        previous_gap = math.inf
        total_iterations = 0

        for round_number in range(1, AUGMENTED_ROUNDS + 1):

            def value(theta, multiplier=multiplier, rho=rho):
                residual = features @ theta - labels
                benefit = residual + 1.0
                gap = math.fsum(benefit.tolist()) - n * self.mu
                return float(
                    residual @ residual + nu * benefit @ benefit + multiplier * gap + 0.5 * rho * gap * gap
                )

            def gradient(theta, multiplier=multiplier, rho=rho):
                residual = features @ theta - labels
                benefit = residual + 1.0
                gap = float(benefit.sum()) - n * self.mu
                return (
                    2.0 * features.T @ residual
                    + 2.0 * nu * features.T @ benefit
                    + (multiplier + rho * gap) * self.row_sum
                )

            def hessian(theta, rho=rho):
                return 2.0 * (1.0 + nu) * self.gram + rho * np.outer(self.row_sum, self.row_sum)

            result = minimize_smooth(
                value,
                gradient,
                theta,
                tol_g=self.config.tol_g,
                max_iter=self.config.max_inner,
                hessian=hessian,
                scale=self.scale * (1.0 + nu) + abs(multiplier) * float(np.linalg.norm(self.row_sum)),
                accept_rounding_floor=True,
            )
            theta = result.x
            total_iterations += result.iterations
            gap = float(self.benefits(theta).sum()) - n * self.mu
            if abs(gap) / n <= 1e-3 * self.config.tol_c:
                return MinimizeResult(theta, result.value, result.gradient_norm, total_iterations)
            multiplier += rho * gap
            if abs(gap) > 0.25 * previous_gap:
                rho *= AUGMENTED_GROWTH
            previous_gap = abs(gap)
            logger.debug(f"拡張ラグランジュ {round_number}: 平均のずれ={gap / n:.3e}, ρ={rho:g}")

        raise NonConvergence(
            AUGMENTED_ROUNDS, result.gradient_norm, f"平均便益の等式制約を満たせません（μ={self.mu:g}）"
        )


def _null_direction(problem: MeanFixedProblem) -> Optional[np.ndarray]:
    """平均便益を変えずに予測を動かす方向"""
    row_sum = problem.row_sum
    norm_sq = float(row_sum @ row_sum)
    for axis in range(problem.features.shape[1]):
        direction = np.zeros(problem.features.shape[1])
        direction[axis] = 1.0
        direction -= (row_sum[axis] / norm_sq) * row_sum
        if np.linalg.norm(problem.features @ direction) > 1e-12:
            return direction
    return None


def _solve_literal(problem: MeanFixedProblem, tau: float) -> Tuple[np.ndarray, str]:
    """GE₂ >= τ として解く

    平均を固定すると Σ b² と Σ r² の差は定数なので、平均固定の最小二乗解から
    平均を保つ方向へ GE₂ = τ となるまで動かした点が最適になる。
    """
    theta = problem.solve(0.0, None).x
    if ge2(problem.benefits(theta), problem.mu) >= tau:
        return theta, "inactive"
    direction = _null_direction(problem)
    if direction is None:
        raise Infeasible(tau, "平均を保ったまま便益を動かせません")
    benefit = problem.benefits(theta)
    moved = problem.features @ direction
    target = 2.0 * problem.n * problem.mu**2 * (tau + 0.5)
    step = math.sqrt(max(0.0, target - float(benefit @ benefit)) / float(moved @ moved))
    return theta + step * direction, "active"


def _solve_for_mu(
    dataset: Dataset, tau: float, mu: float, config: SolverConfig, literal_direction: bool
) -> Dict:
    problem = MeanFixedProblem(dataset, mu, config)
    if literal_direction:
        theta, activity = _solve_literal(problem, tau)
        nu = None
    else:
        bisection = DualBisection(problem.solve, problem.negative_ge2, config, slack=config.tol_c)
        dual = bisection.run(-tau)
        theta, nu = dual.x, dual.lam
        activity = "active" if dual.active else "inactive"

    benefit = problem.benefits(theta)
    residual = benefit - 1.0
    entry = {
        "mu": mu,
        "status": SolveStatus.OPTIMAL.value,
        "loss": math.fsum((residual * residual).tolist()) / dataset.n,
        "ge2": ge2(benefit, mu),
        "mean_gap": abs(float(np.mean(benefit)) - mu),
        "constraint": activity,
        "nu": nu,
        "theta": theta,
    }
    if not literal_direction and entry["ge2"] > tau + config.tol_c:
        raise Infeasible(tau, f"μ={mu:g} で GE₂={entry['ge2']:.6g}")
    return entry


def speicher_mechanism(
    dataset: Dataset,
    tau: float,
    mu_grid: Optional[Sequence[float]] = None,
    config: Optional[SolverConfig] = None,
    literal_direction: bool = False,
) -> MechanismResult:
    """平均便益 μ をグリッドで固定し、GE₂ <= τ の下で損失最小の μ を選ぶ

    Args:
        dataset (Dataset): 回帰データ
        tau (float): GE₂ の上限（literal_direction では下限）
        mu_grid (Optional[Sequence[float]]): 平均便益の候補（省略時は既定グリッド）
        config (Optional[SolverConfig]): ソルバーの設定
        literal_direction (bool): GE₂ >= τ として解く

    Returns:
        MechanismResult: 損失最小の μ での結果（μ ごとの表は details に含む）

    Raises:
        AllInfeasible: グリッドのすべての μ が実行不可能な場合
    """
    if dataset.task != Task.REGRESSION:
        raise ParameterValidationError("task", "このメカニズムは回帰にのみ対応しています")
    if not tau >= 0:
        raise ParameterValidationError("tau", "0 以上である必要があります")
    config = config or SolverConfig()
    grid = default_mu_grid(dataset) if mu_grid is None else np.asarray(mu_grid, dtype=float)
    if grid.size == 0:
        raise ParameterValidationError("mu_grid", "空にできません")
    if not np.all(grid > 0):
        raise ParameterValidationError("mu_grid", "正の値である必要があります")

    entries: List[Dict] = []
    for mu in grid:
        try:
            entries.append(_solve_for_mu(dataset, tau, float(mu), config, literal_direction))
        except (Infeasible, NonConvergence) as e:
            logger.info(f"μ={mu:g} は実行不可能としてスキップします: {str(e)}")
            entries.append({"mu": float(mu), "status": SolveStatus.INFEASIBLE.value, "error": str(e)})

    feasible = [entry for entry in entries if entry["status"] == SolveStatus.OPTIMAL.value]
    if not feasible:
        raise AllInfeasible(len(entries))

    best = min(feasible, key=lambda entry: (entry["loss"], entry["mu"]))
    gap = best["mean_gap"]
    excess = best["ge2"] - tau if not literal_direction else tau - best["ge2"]
    worst = max(gap, excess, 0.0)
    logger.info(
        f"最良の μ={best['mu']:.6g}（損失 {best['loss']:.6g}, GE₂={best['ge2']:.6g}、"
        f"{len(feasible)}/{len(entries)} 個が実行可能）"
    )
    table = [{key: value for key, value in entry.items() if key != "theta"} for entry in entries]
    return MechanismResult(
        model=LinearModel(best["theta"]),
        added_constraints=2,
        max_violation=worst,
        average_violation=worst,
        status=SolveStatus.OPTIMAL,
        details={
            "tau": tau,
            "mu": best["mu"],
            "ge2": best["ge2"],
            "loss": best["loss"],
            "literal_direction": literal_direction,
            "grid": table,
        },
    )
