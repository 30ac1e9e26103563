"""variation - ρ̃-变差泛函 LV 与爆破检测

LV(ω, π) = Σ_j ρ̃(B_{π_j}(ω), B_{π_{j-1}}(ω))。沿典范划分链 τ_1^T ⊆ τ_2^T ⊆ ... 它是
关于 k 的非降序列（ρ̃ 满足三角不等式）。极限为无穷的路径构成爆破集 S_T，其概率为 0；
有限的 profile 无法判定发散，这里用"末尾窗口内持续增长"作为可操作的判据。
"""
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Sequence, Tuple

import numpy as np

from ._typing import Rational
from .exceptions import DimensionMismatch, OutOfHorizon, ProfileTooShort
from .metricspace import TruncatedMetric
from .paths import GridPath, canonical_partition, grid_sample, resolve_workers, as_fraction

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 50
DEFAULT_WINDOW = 5


@dataclass(frozen=True)
class VariationProfile:
    """沿典范划分链的 LV 序列 [(k, lv)]，k = 1..k_max"""
    horizon_T: Fraction
    values: Tuple[Tuple[int, float], ...] = field(repr=False)

    @property
    def lvs(self) -> np.ndarray:
        return np.array([lv for _, lv in self.values])

    def __len__(self) -> int:
        return len(self.values)

    def plateau(self) -> float:
        return self.values[-1][1]

    def is_monotone(self, slack: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.lvs) >= -slack))


def _lv_states(states: np.ndarray, rho_tilde: np.ndarray) -> float:
    return float(rho_tilde[states[1:], states[:-1]].sum())


def lv(gp: GridPath, tm: TruncatedMetric) -> float:
    """划分上的 ρ̃-变差

    Raises:
        DimensionMismatch: 取样中出现度量之外的状态
    """
    if gp.states.size and gp.states.max() >= tm.n:
        raise DimensionMismatch(
            f"grid path visits state {gp.states.max()}, metric has {tm.n} states")
    return _lv_states(gp.states, tm.rho_tilde)


def variation_profile(path, horizon_T: Rational, k_max: int, tm: TruncatedMetric) -> VariationProfile:
    """k = 1..k_max 时的 LV(ω, τ_k^T)

    只在最细的 τ_{k_max}^T 上取样一次，再按每个点的出现层级筛出各个 τ_k^T。

    Raises:
        OutOfHorizon: T 超出路径的时间区间
    """
    horizon_T = as_fraction(horizon_T)
    if float(horizon_T) > path.horizon:
        raise OutOfHorizon(float(horizon_T), path.horizon)
    finest = canonical_partition(horizon_T, k_max)
    sample = grid_sample(path, finest)
    if sample.states.max() >= tm.n:
        raise DimensionMismatch(
            f"path visits state {sample.states.max()}, metric has {tm.n} states")
    levels = finest.levels()
    values = []
    for k in range(1, k_max + 1):
        values.append((k, _lv_states(sample.states[levels <= k], tm.rho_tilde)))
    return VariationProfile(horizon_T, tuple(values))


def detect_blowup(profile: VariationProfile, window: int = DEFAULT_WINDOW,
                  growth_tol: float = 0.0) -> bool:
    """末尾 window 个增量都超过 growth_tol（没有进入平台）时判为爆破

    Raises:
        ProfileTooShort: profile 长度不足 2 * window
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(profile) < 2 * window:
        raise ProfileTooShort(len(profile), window)
    increments = np.diff(profile.lvs)[-window:]
    return bool(np.all(increments > growth_tol))


def ensemble_variation(paths: Sequence, horizon_T: Rational, k_max: int, tm: TruncatedMetric,
                       window: int = DEFAULT_WINDOW, growth_tol: float = 0.0,
                       workers: int = None) -> Dict:
    """对一组路径统计爆破标记与最终 LV 的均值、标准误"""
    workers = resolve_workers(workers)

    def one(path) -> Tuple[bool, float]:
        profile = variation_profile(path, horizon_T, k_max, tm)
        return detect_blowup(profile, window, growth_tol), profile.plateau()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, paths))
    flags = np.array([flag for flag, _ in results])
    finals = np.array([value for _, value in results])
    n = len(results)
    report = {
        "n_paths": n,
        "n_flagged": int(flags.sum()),
        "mean_lv": float(finals.mean()) if n else 0.0,
        "se_lv": float(finals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
    }
    if report["n_flagged"]:
        logger.warning("%d of %d paths flagged as blow-up", report["n_flagged"], n)
    return report
