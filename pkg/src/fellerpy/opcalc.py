"""opcalc - 有限维函数空间上的算子演算

算子（n×n 矩阵）作用在 E 上的实函数上，范数取上确界范数诱导的算子范数
（行绝对值和的最大值）。本模块提供幂级数形式的 exp / log、二者互逆的数值验证、
可交换算子的对数可加性验证，以及由单个转移矩阵恢复生成元。

所有函数都是纯函数，可以并发调用。
"""
from __future__ import annotations
import logging
import math
from typing import Iterable

import numpy as np

from ._typing import Matrix
from .exceptions import CommutatorError, DimensionMismatch, DomainError, InvalidHorizon

logger = logging.getLogger(__name__)

LOG_TAIL_TOL = 1e-14
EXP_TERM_TOL = 1e-18
COMMUTE_TOL = 1e-12
ADDITIVITY_RADIUS = 0.2


def as_op(m: Matrix) -> np.ndarray:
    """转换为 float 方阵并检查有限性"""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"operator must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("operator has non-finite entries")
    return m


def op_norm(m: Matrix) -> float:
    """上确界范数诱导的算子范数：最大行绝对值和"""
    m = as_op(m)
    if m.size == 0:
        return 0.0
    return float(np.abs(m).sum(axis=1).max())


def _exp_series(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 200):
        term = term @ m / k
        result = result + term
        if op_norm(term) <= EXP_TERM_TOL * max(1.0, op_norm(result)):
            break
    return result


def mat_exp(m: Matrix) -> np.ndarray:
    """矩阵指数 exp(m) = Σ m^k / k!

    在幂级数外包一层 scaling-and-squaring：先除以 2^s 使范数不超过 1，
    求级数后再平方 s 次，s = ceil(log2(max(1, ‖m‖)))。

    Args:
        m (Matrix): 方阵

    Returns:
        np.ndarray: exp(m)
    """
    m = as_op(m)
    norm = op_norm(m)
    squarings = int(math.ceil(math.log2(max(1.0, norm))))
    result = _exp_series(m / 2.0**squarings)
    for _ in range(squarings):
        result = result @ result
    return result


def mat_log(m: Matrix) -> np.ndarray:
    """矩阵对数 log(P) = Σ (-1)^{k-1} (P - Id)^k / k

    只在 r = ‖P - Id‖ < 1 时定义；当尾项上界 r^{k+1} / ((k+1)(1-r)) 小于 1e-14 时截断。

    Args:
        m (Matrix): 方阵 P

    Returns:
        np.ndarray: log(P)

    Raises:
        DomainError: ‖P - Id‖ >= 1（包括恰好等于 1 的边界）
    """
    m = as_op(m)
    n = m.shape[0]
    x = m - np.eye(n)
    r = op_norm(x)
    if r >= 1:
        raise DomainError(r)
    result = np.zeros((n, n))
    power = np.eye(n)
    k = 0
    while r**(k + 1) / ((k + 1) * (1 - r)) >= LOG_TAIL_TOL:
        k += 1
        power = power @ x
        result += (-1)**(k - 1) * power / k
    logger.debug("mat_log: r=%.4g, %d terms", r, k)
    return result


def verify_exp_log_roundtrip(m: Matrix, tol: float = 1e-10) -> float:
    """exp(log M) = M 的残差 ‖exp(log M) - M‖，由调用方与 tol 比较"""
    m = as_op(m)
    residual = op_norm(mat_exp(mat_log(m)) - m)
    if residual > tol:
        logger.warning("exp/log roundtrip residual %.3e exceeds %.0e", residual, tol)
    return residual


def verify_log_additivity(p1: Matrix, p2: Matrix, tol: float = 1e-10) -> float:
    """可交换算子的对数可加性 log(P1 P2) = log P1 + log P2

    要求 ‖P_j - Id‖ < 0.2，保证乘积仍在对数的收敛域内。

    Raises:
        CommutatorError: ‖P1 P2 - P2 P1‖ > 1e-12
        DomainError: 某个因子离开小邻域
    """
    p1, p2 = as_op(p1), as_op(p2)
    if p1.shape != p2.shape:
        raise DimensionMismatch(f"shapes differ: {p1.shape} vs {p2.shape}")
    commutator = op_norm(p1 @ p2 - p2 @ p1)
    if commutator > COMMUTE_TOL:
        raise CommutatorError(commutator, COMMUTE_TOL)
    eye = np.eye(p1.shape[0])
    for p in (p1, p2):
        delta = op_norm(p - eye)
        if delta >= ADDITIVITY_RADIUS:
            raise DomainError(
                delta, f"additivity check requires op_norm(p - Id) < "
                f"{ADDITIVITY_RADIUS}, got {delta:.6g}")
    residual = op_norm(mat_log(p1 @ p2) - mat_log(p1) - mat_log(p2))
    if residual > tol:
        logger.warning("log additivity residual %.3e exceeds %.0e", residual, tol)
    return residual


def verify_exp_additivity(a: Matrix, s: float, t: float) -> float:
    """‖exp(As) exp(At) - exp(A(s+t))‖"""
    a = as_op(a)
    return op_norm(mat_exp(a * s) @ mat_exp(a * t) - mat_exp(a * (s + t)))


def recover_generator(q_w: Matrix, w: float) -> np.ndarray:
    """由 w 时刻的转移矩阵恢复生成元 A = log(Q_w) / w

    Args:
        q_w (Matrix): 转移矩阵 Q_w，需满足 ‖Q_w - Id‖ < 1
        w (float): 时间 w > 0

    Returns:
        np.ndarray: 生成元的估计

    Raises:
        InvalidHorizon: w <= 0
        DomainError: Q_w 不在对数的收敛域内
    """
    if not w > 0:
        raise InvalidHorizon(w)
    return mat_log(q_w) / w


def verify_scaling_law(a: Matrix, w: float, ratios: Iterable[float]) -> float:
    """log(exp(A w s)) = s · log(exp(A w)) 对 s ∈ [0, 1] 的最大残差"""
    if not w > 0:
        raise InvalidHorizon(w)
    a = as_op(a)
    base = mat_log(mat_exp(a * w))
    worst = 0.0
    for s in ratios:
        s = float(s)
        if not 0 <= s <= 1:
            raise ValueError(f"ratio must lie in [0, 1], got {s}")
        worst = max(worst, op_norm(mat_log(mat_exp(a * w * s)) - s * base))
    return worst
