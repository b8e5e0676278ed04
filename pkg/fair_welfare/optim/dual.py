"""単一の不等式制約に対するラグランジュ双対変数の二分探索"""

import logging
from typing import Callable, Optional

import numpy as np

from ..core.exceptions import LambdaOverflow
from ..models.data_models import DualResult, MinimizeResult, SolverConfig, SolveStatus

logger = logging.getLogger(__name__)

# (λ, 初期点) → λ を固定した罰則付き問題の最小解
InnerSolver = Callable[[float, Optional[np.ndarray]], MinimizeResult]
ConstraintFn = Callable[[np.ndarray], float]

RELATIVE_WIDTH = 1e-10
STALL_DOUBLINGS = 5


class DualBisection:
    """制約 h(θ) >= target を満たす最小の λ を二分探索で求める

    λ = 0 の解が実行可能ならそれを返す。そうでなければ [0, 1] から上端を
    2倍ずつ広げて実行可能な λ を見つけ、区間の相対幅が 1e-10 を切るまで
    二分する。返すのは常に実行可能側の端点。
    """

    def __init__(
        self,
        solve_inner: InnerSolver,
        constraint: ConstraintFn,
        config: SolverConfig,
        slack: float = 0.0,
    ):
        """初期化

        Args:
            solve_inner: λ と初期点を受け取り内側の問題を解く関数
            constraint: 解に対する制約値 h(θ)
            config (SolverConfig): 許容誤差と反復上限
            slack (float): 実行可能とみなす不足分
        """
        self.solve_inner = solve_inner
        self.constraint = constraint
        self.config = config
        self.slack = slack
        self.inner_iterations = 0

    def _solve(self, lam: float, start: Optional[np.ndarray]) -> MinimizeResult:
        result = self.solve_inner(lam, start)
        self.inner_iterations += result.iterations
        return result

    def _feasible(self, value: float, target: float) -> bool:
        return value >= target - self.slack

    def run(self, target: float) -> DualResult:
        """双対二分探索を実行

        Args:
            target (float): 制約の下限

        Returns:
            DualResult: 実行可能側の λ とその解

        Raises:
            LambdaOverflow: λ_max に達しても制約を満たせない、または制約値が停滞した場合
        """
        config = self.config
        self.inner_iterations = 0

        base = self._solve(0.0, None)
        base_value = self.constraint(base.x)
        if self._feasible(base_value, target):
            logger.debug(f"λ=0 で制約を満たします（h={base_value:.10g}）")
            return DualResult(
                x=base.x,
                lam=0.0,
                constraint_value=base_value,
                active=False,
                outer_iterations=0,
                inner_iterations=self.inner_iterations,
                gradient_norm=base.gradient_norm,
                status=SolveStatus.OPTIMAL,
                bracket=(0.0, 0.0),
                on_boundary=base.on_boundary,
            )

        outer = 0
        lower, upper = 0.0, 1.0
        previous = base_value
        stalled = 0
        warm: Optional[np.ndarray] = None
        while True:
            upper_result = self._solve(upper, warm)
            upper_value = self.constraint(upper_result.x)
            outer += 1
            if self._feasible(upper_value, target):
                break
            if upper_value <= previous + 1e-12 * (1.0 + abs(previous)):
                stalled += 1
            else:
                stalled = 0
            if stalled >= STALL_DOUBLINGS or 2.0 * upper > config.lambda_max:
                logger.warning(f"λ={upper:g} まで広げても制約を満たせません（h={upper_value:.10g}）")
                raise LambdaOverflow(target, upper, upper_value)
            lower, previous, warm = upper, upper_value, upper_result.x
            upper *= 2.0
        logger.debug(f"λ の区間 [{lower:g}, {upper:g}] を確保しました")

        status = SolveStatus.OPTIMAL
        while upper - lower > RELATIVE_WIDTH * upper:
            if outer >= config.max_outer:
                status = SolveStatus.MAX_ITER
                break
            middle = 0.5 * (lower + upper)
            middle_result = self._solve(middle, upper_result.x)
            middle_value = self.constraint(middle_result.x)
            outer += 1
            if self._feasible(middle_value, target):
                upper, upper_result, upper_value = middle, middle_result, middle_value
            else:
                lower = middle

        if upper_value - target > config.tol_c:
            logger.warning(
                f"制約値 {upper_value:.10g} が目標 {target:.10g} + tol_c を超えたまま終了しました"
            )
            status = SolveStatus.MAX_ITER

        logger.debug(f"λ={upper:.12g}, h={upper_value:.12g}（外側 {outer} 回）")
        return DualResult(
            x=upper_result.x,
            lam=upper,
            constraint_value=upper_value,
            active=True,
            outer_iterations=outer,
            inner_iterations=self.inner_iterations,
            gradient_norm=upper_result.gradient_norm,
            status=status,
            bracket=(lower, upper),
            on_boundary=upper_result.on_boundary,
        )
