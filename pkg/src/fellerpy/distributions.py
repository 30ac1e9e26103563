"""distributions - 有限维分布的精确期望

通过迭代转移核公式

    E[φ(B_{t_1}, ..., B_{t_k})]
        = Σ γ(x_0) Q_{t_1}(x_0, x_1) Q_{t_2 - t_1}(x_1, x_2) ··· φ(x_1, ..., x_k)

精确计算有限维期望。求和按时间从晚到早依次做核-张量收缩，不会展开 n^{k+1} 项。
同时给出截断增量的精确期望 E[ρ̃(B_t, B_s)] 及其线性上界常数 M_T、K。

主要类：
    - Distribution: 初始分布 γ
    - BoundConstants: 增量上界常数 M_T 与变差上界常数 K
"""
from __future__ import annotations
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from ._typing import Phi, TimeValue
from .exceptions import (DimensionMismatch, DistributionError, InvalidHorizon,
                         NegativeTime, TimeOrder, UnsortedTimes)
from .metricspace import TruncatedMetric, sup_norm_rho_tilde
from .semigroup import SemigroupFamily

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12


@dataclass(frozen=True)
class Distribution:
    """E 上的概率向量 γ"""
    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        if gamma.ndim != 1 or gamma.size == 0:
            raise DistributionError(f"distribution must be a non-empty vector, got shape {gamma.shape}")
        if np.any(gamma < 0):
            raise DistributionError(f"negative probability at state {int(np.argmin(gamma))}")
        if abs(gamma.sum() - 1) > PROB_TOL:
            raise DistributionError(f"probabilities sum to {gamma.sum()!r}, expected 1")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n(self) -> int:
        return self.gamma.size

    @classmethod
    def point_mass(cls, n: int, state: int) -> Distribution:
        gamma = np.zeros(n)
        gamma[state] = 1.0
        return cls(gamma)

    @classmethod
    def uniform(cls, n: int) -> Distribution:
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class BoundConstants:
    """M_T = ‖A‖ exp(‖A‖ T) ‖ρ̃‖；K 为同一公式在 T = 1 时的值"""
    m_t: float
    k: float
    horizon: float

    def to_dict(self) -> Dict:
        return {"m_t": self.m_t, "k": self.k, "horizon": self.horizon}


def _check_dims(gamma: Distribution, fam: SemigroupFamily) -> None:
    if gamma.n != fam.n:
        raise DimensionMismatch(f"distribution has {gamma.n} states, semigroup has {fam.n}")


def _phi_tensor(phi: Phi, n: int, k: int) -> np.ndarray:
    if callable(phi):
        tensor = np.empty((n, ) * k)
        for idx in itertools.product(range(n), repeat=k):
            tensor[idx] = phi(*idx)
        return tensor
    tensor = np.asarray(phi, dtype=float)
    if tensor.shape != (n, ) * k:
        raise DimensionMismatch(f"phi tensor has shape {tensor.shape}, expected {(n, ) * k}")
    return tensor


def fdd_expectation(gamma: Distribution, fam: SemigroupFamily,
                    times: Sequence[TimeValue], phi: Phi) -> float:
    """有限维期望 E[φ(B_{t_1}, ..., B_{t_k})]

    Args:
        gamma (Distribution): B_0 的分布
        fam (SemigroupFamily): 转移半群
        times (Sequence[TimeValue]): 0 <= t_1 <= ... <= t_k
        phi (Phi): k 元函数（接收 k 个状态下标），或形状为 (n,)*k 的张量

    Returns:
        float: 期望值

    Raises:
        UnsortedTimes: 时间不是非降序
        DimensionMismatch: 维度不一致
    """
    _check_dims(gamma, fam)
    times = [float(t) for t in times]
    if not times:
        raise ValueError("need at least one time")
    if times[0] < 0:
        raise NegativeTime(times[0])
    if any(b < a for a, b in zip(times, times[1:])):
        raise UnsortedTimes(times)
    k, n = len(times), fam.n
    tensor = _phi_tensor(phi, n, k)

    gaps = [times[0]] + [b - a for a, b in zip(times, times[1:])]
    kernels = [fam.kernel_at(gap).q for gap in gaps]
    # 从最晚的时间开始收缩: W(x_1..x_{j-1}) = Σ_{x_j} Q(x_{j-1}, x_j) W(x_1..x_j)
    w = tensor
    for q in reversed(kernels[1:]):
        w = np.einsum('...ab,ab->...a', w, q)
    return float(gamma.gamma @ kernels[0] @ w)


def marginal(gamma: Distribution, fam: SemigroupFamily, t: TimeValue) -> Distribution:
    """t 时刻的边缘分布 γ Q_t"""
    _check_dims(gamma, fam)
    t = float(t)
    if t < 0:
        raise NegativeTime(t)
    p = gamma.gamma @ fam.kernel_at(t).q
    return Distribution(p / p.sum())


def expected_truncated_distance(gamma: Distribution, fam: SemigroupFamily, s: TimeValue,
                                t: TimeValue, tm: TruncatedMetric) -> float:
    """E[ρ̃(B_t, B_s)] = Σ_{x_1} (γ Q_s)(x_1) Σ_{x_2} Q_{t-s}(x_1, x_2) ρ̃(x_1, x_2)

    Raises:
        TimeOrder: s > t
    """
    s, t = float(s), float(t)
    if s > t:
        raise TimeOrder(s, t)
    if tm.n != fam.n:
        raise DimensionMismatch(f"metric has {tm.n} states, semigroup has {fam.n}")
    p = marginal(gamma, fam, s).gamma
    q = fam.kernel_at(t - s).q
    return float(p @ (q * tm.rho_tilde).sum(axis=1))


def euphoria_bound(fam: SemigroupFamily, horizon: float, tm: TruncatedMetric) -> BoundConstants:
    """增量上界常数

    对所有 0 <= s <= t 且 t - s <= T，有 E[ρ̃(B_t, B_s)] <= M_T (t - s)，其中
    M_T = ‖A‖ exp(‖A‖ T) ‖ρ̃‖。变差上界常数 K 取 T = 1 时的 M_1（每个划分小区间长度 <= 1）。

    Raises:
        InvalidHorizon: horizon <= 0
    """
    horizon = float(horizon)
    if not horizon > 0:
        raise InvalidHorizon(horizon)
    norm_a = fam.gen.norm
    sup_rho = sup_norm_rho_tilde(tm)
    m_t = norm_a * np.exp(norm_a * horizon) * sup_rho
    k = norm_a * np.exp(norm_a) * sup_rho
    return BoundConstants(float(m_t), float(k), horizon)


def expected_lv(gamma: Distribution, fam: SemigroupFamily, points: Sequence[TimeValue],
                tm: TruncatedMetric) -> float:
    """划分上 ρ̃-变差的精确期望：各小区间 E[ρ̃] 之和（期望的线性）"""
    points = [float(p) for p in points]
    return float(
        sum(expected_truncated_distance(gamma, fam, a, b, tm)
            for a, b in zip(points, points[1:])))


def bound_grid(gamma: Distribution, fam: SemigroupFamily, tm: TruncatedMetric,
               horizon: float, grid_size: int = 50) -> Tuple[BoundConstants, pd.DataFrame, float]:
    """在 [0, T]^2 网格上比较 E[ρ̃(B_t, B_s)] 与 M_T (t - s)

    Returns:
        Tuple[BoundConstants, pd.DataFrame, float]: 常数、网格表 (s, t, expectation, bound, ratio)
        与最大比值（M_T = 0 时为 0）
    """
    bounds = euphoria_bound(fam, horizon, tm)
    axis = np.linspace(0.0, float(horizon), grid_size)
    rows = []
    for s in axis:
        for t in axis:
            if t <= s or t - s > horizon:
                continue
            expectation = expected_truncated_distance(gamma, fam, s, t, tm)
            bound = bounds.m_t * (t - s)
            ratio = expectation / bound if bound > 0 else 0.0
            rows.append(dict(s=float(s), t=float(t), expectation=expectation,
                             bound=bound, ratio=ratio))
    df = pd.DataFrame(rows, columns=["s", "t", "expectation", "bound", "ratio"])
    worst = float(df["ratio"].max()) if len(df) else 0.0
    return bounds, df, worst
