"""Armijo 条件付きバックトラッキングによる平滑最小化"""

import logging
from typing import Callable, Optional

import numpy as np

from ..core.exceptions import DomainCollapse, NonConvergence
from ..models.data_models import MinimizeResult

logger = logging.getLogger(__name__)

Vector = np.ndarray
ValueFn = Callable[[Vector], float]
GradientFn = Callable[[Vector], Vector]
HessianFn = Callable[[Vector], np.ndarray]
DomainFn = Callable[[Vector], bool]
# (x, 方向) → 定義域の境界までのステップ幅
MaxStepFn = Callable[[Vector, Vector], float]

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
# 値の差がこの相対幅以下なら丸め誤差とみなす
NOISE_FLOOR = 1e-10
DECREMENT_FLOOR = 1e-14
FRACTION_TO_BOUNDARY = 0.99
# 境界で切り詰めたステップがこの回数続いたら最小解は定義域の外
BOUNDARY_STALL = 100


def _newton_direction(gradient: Vector, hessian: np.ndarray) -> Vector:
    direction = -np.linalg.lstsq(hessian, gradient, rcond=None)[0]
    if not np.all(np.isfinite(direction)) or gradient @ direction >= 0:
        return -gradient
    return direction


def _gradient_drops(
    gradient: GradientFn, candidate: Vector, grad_norm: float, in_domain: Optional[DomainFn]
) -> bool:
    if in_domain is not None and not in_domain(candidate):
        return False
    return float(np.linalg.norm(gradient(candidate))) < grad_norm


def minimize_smooth(
    value: ValueFn,
    gradient: GradientFn,
    x0: Vector,
    tol_g: float,
    max_iter: int,
    hessian: Optional[HessianFn] = None,
    in_domain: Optional[DomainFn] = None,
    floor: float = 0.0,
    scale: float = 1.0,
    max_step: Optional[MaxStepFn] = None,
    accept_rounding_floor: bool = False,
) -> MinimizeResult:
    """平滑関数を最小化

    hessian があれば減衰ニュートン法、なければ最急降下法。
    どちらも Armijo 条件を満たすまでステップを半分にし、
    in_domain を満たさない点は試行しない。
    max_step があれば初期ステップを境界までの距離の 99% に抑える。
    勾配ノルムが tol_g * scale 以下になったときだけ収束とみなす。

    Args:
        value: 目的関数
        gradient: 勾配
        x0 (Vector): 初期点（in_domain を満たすこと）
        tol_g (float): 勾配ノルムの許容値（scale 倍して使う）
        max_iter (int): 最大反復回数
        hessian: ヘッセ行列（任意）
        in_domain: 定義域の判定（任意）
        floor (float): DomainCollapse の報告に使う下限
        scale (float): 勾配の大きさの目安
        max_step: 定義域の境界までのステップ幅（任意）
        accept_rounding_floor (bool): ニュートン減少量が丸め誤差以下で、
            完全なニュートンステップでも勾配が減らない点を解として返すか
            （罰則が大きく勾配の許容値に届かない問題向け）

    Returns:
        MinimizeResult: 最小化の結果

    Raises:
        DomainCollapse: どのステップ幅でも定義域に留まれない、
            または境界に張り付いたまま進めない場合
        NonConvergence: max_iter 回で収束しない、または直線探索が停滞した場合
    """
    x = np.array(x0, dtype=float)
    if in_domain is not None and not in_domain(x):
        raise DomainCollapse(floor, "初期点が定義域外です")
    f = value(x)
    threshold = tol_g * scale
    g = gradient(x)
    grad_norm = float(np.linalg.norm(g))
    boundary_steps = 0

    for iteration in range(max_iter):
        if grad_norm <= threshold:
            return MinimizeResult(x, f, grad_norm, iteration)

        direction = -g if hessian is None else _newton_direction(g, hessian(x))
        slope = float(g @ direction)
        if (
            accept_rounding_floor
            and hessian is not None
            and -slope <= DECREMENT_FLOOR * (1.0 + abs(f))
            and not _gradient_drops(gradient, x + direction, grad_norm, in_domain)
        ):
            logger.debug(f"勾配が丸め誤差の下限に達しました（|g|={grad_norm:.3e}）")
            return MinimizeResult(x, f, grad_norm, iteration)

        step = 1.0
        if max_step is not None:
            limit = FRACTION_TO_BOUNDARY * max_step(x, direction)
            if limit < 1.0:
                step = limit
                boundary_steps += 1
                if boundary_steps >= BOUNDARY_STALL:
                    raise DomainCollapse(
                        floor, f"最小解が定義域の外にあります（反復 {iteration}, |g|={grad_norm:.3e}）"
                    )
            else:
                boundary_steps = 0
        accepted = False
        domain_failures = 0
        for _ in range(MAX_BACKTRACKS):
            candidate = x + step * direction
            if in_domain is not None and not in_domain(candidate):
                domain_failures += 1
                step *= BACKTRACK
                continue
            candidate_value = value(candidate)
            if candidate_value <= f + ARMIJO_C1 * step * slope:
                accepted = True
            elif abs(candidate_value - f) <= NOISE_FLOOR * (1.0 + abs(f)):
                candidate_gradient = gradient(candidate)
                accepted = float(np.linalg.norm(candidate_gradient)) < grad_norm
            if accepted:
                break
            step *= BACKTRACK

        if not accepted:
            if domain_failures == MAX_BACKTRACKS:
                raise DomainCollapse(floor, f"反復 {iteration}")
            raise NonConvergence(iteration, grad_norm, "直線探索が停滞しました")

        x = candidate
        f = candidate_value
        g = gradient(x)
        grad_norm = float(np.linalg.norm(g))
        logger.debug(f"反復 {iteration + 1}: f={f:.12g}, |g|={grad_norm:.3e}, step={step:g}")

    if grad_norm <= threshold:
        return MinimizeResult(x, f, grad_norm, max_iter)
    raise NonConvergence(max_iter, grad_norm)


def _normalize(x: Vector) -> Vector:
    return x / np.linalg.norm(x)


def tangent_gradient(x: Vector, g: Vector) -> Vector:
    """単位球面への接空間に射影した勾配"""
    return g - (g @ x) * x


def minimize_on_sphere(
    value: ValueFn,
    gradient: GradientFn,
    x0: Vector,
    tol_g: float,
    max_iter: int,
    in_domain: Optional[DomainFn] = None,
    floor: float = 0.0,
    scale: float = 1.0,
    max_step: float = 64.0,
) -> MinimizeResult:
    """単位球面上の射影勾配法

    各ステップ後に正規化し、受理されたステップ幅は次回2倍から試す。
    直線探索が停滞した場合は現在点を返す（球面制約付き問題は大域最適を保証しない）。
    """
    x = _normalize(np.array(x0, dtype=float))
    if in_domain is not None and not in_domain(x):
        raise DomainCollapse(floor, "初期点が定義域外です")
    f = value(x)
    threshold = tol_g * scale
    step = 1.0
    riemannian = tangent_gradient(x, gradient(x))
    grad_norm = float(np.linalg.norm(riemannian))

    for iteration in range(max_iter):
        if grad_norm <= threshold:
            return MinimizeResult(x, f, grad_norm, iteration)

        accepted = False
        domain_failures = 0
        for _ in range(MAX_BACKTRACKS):
            candidate = _normalize(x - step * riemannian)
            if in_domain is not None and not in_domain(candidate):
                domain_failures += 1
                step *= BACKTRACK
                continue
            candidate_value = value(candidate)
            if candidate_value <= f - ARMIJO_C1 * step * grad_norm**2:
                accepted = True
                break
            step *= BACKTRACK

        if not accepted:
            if domain_failures == MAX_BACKTRACKS:
                raise DomainCollapse(floor, f"反復 {iteration}")
            logger.debug(f"球面上の直線探索が停滞（|g|={grad_norm:.3e}）")
            return MinimizeResult(x, f, grad_norm, iteration)

        x, f = candidate, candidate_value
        riemannian = tangent_gradient(x, gradient(x))
        grad_norm = float(np.linalg.norm(riemannian))
        step = min(2.0 * step, max_step)

    logger.debug(f"球面上の最小化が反復上限 {max_iter} に達しました（|g|={grad_norm:.3e}）")
    return MinimizeResult(x, f, grad_norm, max_iter)
