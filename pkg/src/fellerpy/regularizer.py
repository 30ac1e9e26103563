"""regularizer - 右有理极限正则化与 càdlàg 修正的审计

构造：
    - Case 1: 路径属于爆破集（ρ̃-变差沿典范划分链发散）时，正则化路径恒等于备选状态 ê；
    - Case 2: 否则 B̃_t = lim_{s→t+, s∈Q+} B_s，用二进偏移 t + 2^{-j} 的稳定值实现。

审计：
    - verify_cadlag: 右连续且左极限存在
    - verify_modification: 在连续分布的随机时刻与原路径一致
    - verify_rational_continuity: 双侧有理极限等于取值
    - markov_audit: 正则化过程的条件期望与精确核 Q_t f 比较（含对过去事件的条件化）
"""
from __future__ import annotations
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._typing import LimitSide, Rational, Vector
from .distributions import Distribution
from .exceptions import (DimensionMismatch, InsufficientConditioningMass, NegativeTime,
                         NoStabilization, OutOfHorizon)
from .metricspace import FiniteMetricSpace, TruncatedMetric, truncate_metric
from .paths import (CorruptedPath, RationalPartition, _check_times, as_fraction, corrupt,
                    replicate_seed, resolve_workers, simulate_ctmc)
from .semigroup import SemigroupFamily, apply_kernel
from .variation import DEFAULT_K_MAX, DEFAULT_WINDOW, detect_blowup, variation_profile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LimitScheme:
    """单侧有理极限的有限实现

    offsets 是严格递减趋于 0 的正有理数（默认 2^{-j}, j = 4..40）。
    极限取包含最细偏移的那一段连续相同取值，它的长度至少为 stability_window；
    因此只需在最细的 stability_window 个偏移上求值；t 很大时 t ± o 可能舍回 t，
    这些偏移不参与求值（见 offsets_at）。
    """
    offsets: Tuple[Fraction, ...] = tuple(Fraction(1, 2**j) for j in range(4, 41))
    stability_window: int = 8

    def __post_init__(self):
        offsets = tuple(as_fraction(o) for o in self.offsets)
        if any(o <= 0 for o in offsets):
            raise ValueError("offsets must be positive")
        if any(b >= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError("offsets must be strictly decreasing")
        if self.stability_window < 2:
            raise ValueError(f"stability window must be >= 2, got {self.stability_window}")
        if self.stability_window > len(offsets):
            raise ValueError("stability window longer than the offset list")
        object.__setattr__(self, "offsets", offsets)

    @property
    def finest_first(self) -> np.ndarray:
        """全部偏移的浮点值，从最细到最粗"""
        return np.array([float(o) for o in reversed(self.offsets)])

    @property
    def used_offsets(self) -> np.ndarray:
        """t 的 ulp 足够小时实际求值的偏移，从最细到较粗"""
        return self.finest_first[:self.stability_window]

    @property
    def reach(self) -> float:
        """ulp 足够小时求值点离 t 的最远距离"""
        return float(self.offsets[-self.stability_window])

    def offsets_at(self, times, side: LimitSide = "right") -> np.ndarray:
        """每个 t 实际使用的偏移，形状 (len(times), stability_window)

        t ± o 在 float64 中舍回 t 的偏移跳过，取剩下最细的 stability_window 个；
        剩下的不够时重复最粗的偏移。
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        sign = 1.0 if side == "right" else -1.0
        offsets = self.finest_first
        moved = (times[:, None] + sign * offsets[None, :]) != times[:, None]
        start = np.sum(~moved, axis=1)
        index = np.minimum(start[:, None] + np.arange(self.stability_window)[None, :],
                           len(offsets) - 1)
        return offsets[index]

    def reach_at(self, t: float) -> float:
        """[0, t] 内任一点上求值点离该点的最远距离（ulp 随 t 单调不减）"""
        t = abs(float(t))
        return float(max(self.offsets_at([t], "right").max(), self.offsets_at([t], "left").max()))


DEFAULT_SCHEME = LimitScheme()


def evaluate(path, times) -> np.ndarray:
    """批量求值；路径没有 eval_many 时逐点求值"""
    times = np.asarray(times, dtype=float)
    eval_many = getattr(path, "eval_many", None)
    if eval_many is not None:
        return np.asarray(eval_many(times.ravel()), dtype=int).reshape(times.shape)
    return np.array([path.eval_at(t) for t in times.ravel()], dtype=int).reshape(times.shape)


def evaluate_checked(path, times) -> Tuple[np.ndarray, np.ndarray]:
    """批量求值，另返回每点的值是否有定义

    正则化路径的值本身是右极限，极限没有稳定下来的点记为 False 而不抛异常；
    其他路径的值处处有定义。
    """
    times = np.asarray(times, dtype=float)
    stable_many = getattr(path, "stable_many", None)
    if stable_many is None:
        return evaluate(path, times), np.ones(times.shape, dtype=bool)
    values, ok = stable_many(times.ravel())
    return values.reshape(times.shape), ok.reshape(times.shape)


def limit_tails(path, times, scheme: LimitScheme = DEFAULT_SCHEME,
                side: LimitSide = "right") -> np.ndarray:
    """每个 t 在 t ± offset 上的取值，形状 (len(times), stability_window)，第 0 列为最细偏移"""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sign = 1.0 if side == "right" else -1.0
    return evaluate(path, times[:, None] + sign * scheme.offsets_at(times, side))


def _stable(tails: np.ndarray) -> np.ndarray:
    return np.all(tails == tails[:, :1], axis=1)


def checked_tails(path, times, scheme: LimitScheme = DEFAULT_SCHEME,
                  side: LimitSide = "right") -> Tuple[np.ndarray, np.ndarray]:
    """limit_tails 的不抛异常版本：返回取值序列和"序列稳定且每点有定义"的掩码"""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sign = 1.0 if side == "right" else -1.0
    tails, ok = evaluate_checked(path, times[:, None] + sign * scheme.offsets_at(times, side))
    return tails, _stable(tails) & ok.all(axis=1)


def rational_limits(path, times, scheme: LimitScheme = DEFAULT_SCHEME,
                    side: LimitSide = "right") -> np.ndarray:
    """一组时刻上的单侧有理极限

    Raises:
        NoStabilization: 第一个没有稳定下来的时刻，附带它的取值序列
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    tails = limit_tails(path, times, scheme, side)
    stable = _stable(tails)
    if not stable.all():
        bad = int(np.argmin(stable))
        raise NoStabilization(float(times[bad]), side, tails[bad].tolist())
    return tails[:, 0]


def right_limit(path, t: float, scheme: LimitScheme = DEFAULT_SCHEME) -> int:
    """右有理极限 lim_{s→t+, s∈Q+} B_s

    Raises:
        NoStabilization: 最细的 stability_window 个偏移上取值不一致
        OutOfHorizon: t + 偏移超出路径区间
    """
    return int(rational_limits(path, [t], scheme, "right")[0])


def left_limit(path, t: float, scheme: LimitScheme = DEFAULT_SCHEME) -> int:
    """左有理极限 lim_{s→t-, s∈Q+} B_s；跳跃时刻处等于跳跃前的状态"""
    return int(rational_limits(path, [t], scheme, "left")[0])


class RegularizedPath:
    """正则化路径 B̃

    Case 1 (blowup_case=True) 时恒为 fallback_state；Case 2 时按需计算右有理极限，
    单点求值的结果缓存，写入由锁保护。
    可求值区间为 [0, source.horizon - scheme.reach_at(source.horizon)]。

    Args:
        source: 原路径（EventPath / CorruptedPath / 其他带 eval_at 的路径）
        blowup_case (bool): 是否属于爆破集
        fallback_state (int): 备选状态 ê
        scheme (LimitScheme, optional): 极限方案
    """

    def __init__(self, source, blowup_case: bool, fallback_state: int = 0,
                 scheme: LimitScheme = DEFAULT_SCHEME) -> None:
        if not 0 <= fallback_state < source.n_states:
            raise DimensionMismatch(f"fallback state {fallback_state} outside 0..{source.n_states - 1}")
        self.source = source
        self.blowup_case = bool(blowup_case)
        self.fallback_state = int(fallback_state)
        self.scheme = scheme
        self._horizon = source.horizon - scheme.reach_at(source.horizon)
        self._limits: Dict[float, int] = {}
        self._lock = threading.Lock()

    @property
    def horizon(self) -> float:
        return self._horizon

    @property
    def n_states(self) -> int:
        return self.source.n_states

    def eval_at(self, t) -> int:
        t = float(t)
        if not 0 <= t <= self.horizon:
            raise OutOfHorizon(t, self.horizon)
        if self.blowup_case:
            return self.fallback_state
        state = self._limits.get(t)
        if state is None:
            state = right_limit(self.source, t, self.scheme)
            with self._lock:
                self._limits[t] = state
        return state

    def eval_many(self, times) -> np.ndarray:
        times = _check_times(times, self.horizon)
        if self.blowup_case:
            return np.full(times.shape, self.fallback_state, dtype=int)
        return rational_limits(self.source, times, self.scheme, "right")

    def stable_many(self, times) -> Tuple[np.ndarray, np.ndarray]:
        """eval_many 的不抛异常版本：(取值, 右极限是否稳定)"""
        times = _check_times(times, self.horizon)
        if self.blowup_case:
            return (np.full(times.shape, self.fallback_state, dtype=int),
                    np.ones(times.shape, dtype=bool))
        tails = limit_tails(self.source, times, self.scheme, "right")
        return tails[:, 0], _stable(tails)

    def eval_grid(self, partition: RationalPartition) -> np.ndarray:
        return self.eval_many(partition.as_floats())

    def __repr__(self) -> str:
        case = "case 1" if self.blowup_case else "case 2"
        return f"RegularizedPath({case}, horizon={self.horizon:.6g})"


def regularize(path, horizon_T: Rational, k_max: int = DEFAULT_K_MAX, tm: TruncatedMetric = None,
               scheme: LimitScheme = DEFAULT_SCHEME, fallback: int = 0,
               window: int = DEFAULT_WINDOW, growth_tol: float = 0.0) -> RegularizedPath:
    """构造正则化路径

    先沿 [0, T] 上的典范划分链计算 ρ̃-变差并判定爆破（爆破集关于 T 单调，
    检查最大的 T 就覆盖了所有更小的 T）；爆破则取 Case 1，否则取 Case 2。

    Args:
        path: 原路径
        horizon_T (Rational): T
        k_max (int, optional): 典范划分的最大分母. Defaults to 50.
        tm (TruncatedMetric, optional): 截断度量，缺省为离散度量
        scheme (LimitScheme, optional): 右极限方案
        fallback (int, optional): 备选状态 ê. Defaults to 0.
        window (int, optional): 爆破判定窗口. Defaults to 5.
        growth_tol (float, optional): 爆破判定的增长阈值. Defaults to 0.0.

    Returns:
        RegularizedPath: 正则化路径
    """
    if tm is None:
        tm = truncate_metric(FiniteMetricSpace.discrete(path.n_states))
    profile = variation_profile(path, horizon_T, k_max, tm)
    flagged = detect_blowup(profile, window, growth_tol)
    if flagged:
        logger.info("path flagged as blow-up on [0, %s]; using fallback state %d", horizon_T, fallback)
    return RegularizedPath(path, flagged, fallback, scheme)


# ---------------------------------------------------------------------------
# 审计
# ---------------------------------------------------------------------------


@dataclass
class CadlagReport:
    n_audits: int = 0
    failures: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict:
        return {"n_audits": self.n_audits, "n_failures": len(self.failures),
                "failures": self.failures}


def audit_times(n: int, horizon: float, seed, margin: float = 0.0) -> np.ndarray:
    """(margin, horizon - margin) 上的均匀连续审计时刻"""
    if n < 1:
        raise ValueError(f"need at least one audit time, got {n}")
    if not horizon > 2 * margin:
        raise ValueError(f"margin {margin} leaves no room in [0, {horizon}]")
    rng = np.random.default_rng(seed)
    return rng.uniform(margin, horizon - margin, size=n)


def verify_cadlag(rp, audit: Sequence[float], scheme: LimitScheme = DEFAULT_SCHEME) -> CadlagReport:
    """在每个审计时刻检查 (1) 右极限存在且等于取值 (2) 左极限存在；失败作为数据返回

    rp 可以是任何带 eval_at 的路径，原始的污染路径也可以直接审计。正则化路径在某点
    本身没有定义（原路径的右极限不稳定）时，记为该点的 right-limit 失败。
    """
    times = np.atleast_1d(np.asarray(audit, dtype=float))
    values, value_ok = evaluate_checked(rp, times)
    right, right_ok = checked_tails(rp, times, scheme, "right")
    left, left_ok = checked_tails(rp, times, scheme, "left")
    report = CadlagReport(n_audits=len(times))
    for i, t in enumerate(times.tolist()):
        value = int(values[i])
        if not (right_ok[i] and value_ok[i]):
            report.failures.append(dict(t=t, kind="right-limit", value=value, tail=right[i].tolist()))
        elif right[i, 0] != value:
            report.failures.append(
                dict(t=t, kind="right-continuity", value=value, limit=int(right[i, 0])))
        if not left_ok[i]:
            report.failures.append(dict(t=t, kind="left-limit", value=value, tail=left[i].tolist()))
    return report


def verify_modification(rp: RegularizedPath, n_audit: int, seed, diagnostic: bool = False) -> float:
    """随机审计时刻上正则化路径与原路径一致的比例

    diagnostic=True 时额外审计原路径的污染时刻，用来展示污染确实存在（比例 < 1）。
    正则化路径没有定义的时刻算作不一致。
    """
    times = audit_times(n_audit, rp.horizon, seed)
    if diagnostic and isinstance(rp.source, CorruptedPath):
        extra = [c for c in rp.source.corruption_times if c <= rp.horizon]
        times = np.concatenate([times, extra])
    values, ok = evaluate_checked(rp, times)
    agree = ok & (values == evaluate(rp.source, times))
    return float(agree.mean())


def verify_rational_continuity(path, t: float, scheme: LimitScheme = DEFAULT_SCHEME) -> bool:
    """双侧有理极限都等于 B_t 时为 True

    跳跃时刻本身左极限不等于取值，会返回 False；随机时刻几乎必然避开跳跃时刻。

    Raises:
        NoStabilization: 任一侧的极限没有稳定下来
    """
    t = float(t)
    if not 0 < t < path.horizon:
        raise OutOfHorizon(t, path.horizon)
    value = evaluate(path, [t])[0]
    right = rational_limits(path, [t], scheme, "right")[0]
    left = rational_limits(path, [t], scheme, "left")[0]
    return bool(right == value and left == value)


def rational_continuity_mask(path, times, scheme: LimitScheme = DEFAULT_SCHEME) -> np.ndarray:
    """逐个时刻判断双侧有理极限是否存在且等于取值；没有稳定下来的时刻记为 False"""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    values, value_ok = evaluate_checked(path, times)
    right, right_ok = checked_tails(path, times, scheme, "right")
    left, left_ok = checked_tails(path, times, scheme, "left")
    return value_ok & right_ok & left_ok & (right[:, 0] == values) & (left[:, 0] == values)


@dataclass
class MarkovCell:
    key: Tuple[int, ...]
    n: int
    mean: float
    expected: float
    se: float
    deviation: float
    within: bool

    def to_dict(self) -> Dict:
        return dict(key=list(self.key), n=self.n, mean=self.mean, expected=self.expected,
                    se=self.se, deviation=self.deviation, within=self.within)


@dataclass
class MarkovAuditReport:
    s: float
    t: float
    past_time: Optional[float]
    n_paths: int
    cells: List[MarkovCell] = field(default_factory=list)
    skipped: List[Tuple[int, ...]] = field(default_factory=list)
    exempt_fraction: float = 0.01

    @property
    def max_deviation(self) -> float:
        return max((c.deviation for c in self.cells), default=0.0)

    @property
    def n_breaches(self) -> int:
        return sum(not c.within for c in self.cells)

    @property
    def passed(self) -> bool:
        return self.n_breaches <= math.floor(self.exempt_fraction * len(self.cells))

    def to_dict(self) -> Dict:
        return dict(s=self.s, t=self.t, past_time=self.past_time, n_paths=self.n_paths,
                    max_deviation=self.max_deviation, n_breaches=self.n_breaches,
                    passed=self.passed, skipped=[list(k) for k in self.skipped],
                    cells=[c.to_dict() for c in self.cells])


def markov_audit(fam: SemigroupFamily, gamma: Distribution, s: float, t: float, f: Vector,
                 n_paths: int, master_seed: int, past_time: float = None,
                 corruption_count: int = 1, k_max: int = DEFAULT_K_MAX,
                 tm: TruncatedMetric = None, scheme: LimitScheme = DEFAULT_SCHEME,
                 fallback: int = 0, se_multiplier: float = 3.0, min_cell: int = 2,
                 exempt_fraction: float = 0.01, workers: int = None) -> MarkovAuditReport:
    """正则化过程的马氏性审计

    模拟 n_paths 条路径，逐条污染、正则化，然后按 B̃_s = x 分组估计 E[f(B̃_{t+s}) | B̃_s = x]，
    与 (Q_t f)(x) 比较。给定 past_time = r <= s 时按 (B̃_r, B̃_s) 分组，
    即再对过去的事件做条件化。标准误取精确的条件方差 (Q_t f^2 - (Q_t f)^2)(x) / n。

    Args:
        fam (SemigroupFamily): 半群
        gamma (Distribution): 初始分布
        s (float): 条件化时刻
        t (float): 向前的时间
        f (Vector): 有界函数
        n_paths (int): 路径数
        master_seed (int): 主种子
        past_time (float, optional): 过去的条件化时刻 r <= s. Defaults to None.
        corruption_count (int, optional): 每条路径的污染点数，0 表示不污染. Defaults to 1.

    Returns:
        MarkovAuditReport: 审计报告，max_deviation 为各组的最大偏差

    Raises:
        InsufficientConditioningMass: 没有任何一组达到 min_cell 个样本
    """
    for value in (s, t):
        if value < 0:
            raise NegativeTime(value)
    if past_time is not None and not 0 <= past_time <= s:
        raise ValueError(f"past_time must lie in [0, s], got {past_time}")
    f = np.asarray(f, dtype=float)
    if f.shape != (fam.n, ):
        raise DimensionMismatch(f"function has shape {f.shape}, expected ({fam.n},)")
    horizon_T = max(1, math.ceil(s + t))
    horizon = horizon_T + 0.125
    kernel = fam.kernel_at(t)
    qf = apply_kernel(kernel, f)
    qf2 = apply_kernel(kernel, f**2)
    if tm is None:
        tm = truncate_metric(FiniteMetricSpace.discrete(fam.n))
    query = ([] if past_time is None else [past_time]) + [s, s + t]

    def one(index: int) -> np.ndarray:
        path = simulate_ctmc(fam.gen, gamma, horizon, replicate_seed(master_seed, index))
        if corruption_count > 0 and fam.n > 1:
            path = corrupt(path, corruption_count, replicate_seed(master_seed, index, stream=1))
        rp = regularize(path, horizon_T, k_max, tm, scheme, fallback)
        return rp.eval_many(query)

    with ThreadPoolExecutor(max_workers=resolve_workers(workers)) as pool:
        samples = np.array(list(pool.map(one, range(n_paths))), dtype=int)

    report = MarkovAuditReport(float(s), float(t), past_time, n_paths,
                               exempt_fraction=exempt_fraction)
    targets = f[samples[:, -1]]
    groups: Dict[Tuple[int, ...], List[int]] = {}
    for i, row in enumerate(samples[:, :-1].tolist()):
        groups.setdefault(tuple(row), []).append(i)
    for key in sorted(groups):
        idx = groups[key]
        if len(idx) < min_cell:
            report.skipped.append(key)
            continue
        x = key[-1]
        mean = float(np.mean(targets[idx]))
        expected = float(qf[x])
        variance = max(float(qf2[x]) - expected**2, 0.0)
        se = math.sqrt(variance / len(idx))
        deviation = abs(mean - expected)
        within = deviation <= se_multiplier * se + 1e-12
        report.cells.append(MarkovCell(key, len(idx), mean, expected, se, deviation, within))
    if report.skipped:
        logger.warning("markov audit skipped cells without mass: %s", report.skipped)
    if not report.cells:
        raise InsufficientConditioningMass(report.skipped)
    return report
