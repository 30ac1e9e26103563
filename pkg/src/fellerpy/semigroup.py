"""semigroup - 生成元、转移核与转移半群

Q_t = exp(A t) 由一个保守的速率矩阵 A 生成。本模块负责：

    - Generator: 保守生成元（非对角元非负、行和为 0）
    - TransitionKernel: 单个随机矩阵 Q_t 及其在函数上的作用
    - SemigroupFamily: t ↦ Q_t，带线程安全的缓存
    - 半群律（Q_0 = Id、Chapman–Kolmogorov）与强连续性的数值验证
"""
from __future__ import annotations
import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ._typing import TimeValue, Vector
from .exceptions import DimensionMismatch, GeneratorError, KernelError, NegativeTime
from .opcalc import as_op, mat_exp, op_norm

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
CLAMP_TOL = 1e-12
STOCHASTIC_TOL = 1e-10
KERNEL_CACHE_SIZE = 4096


@dataclass(frozen=True)
class Generator:
    """保守生成元 A（单位：1/时间）

    Args:
        a (np.ndarray): n×n 速率矩阵，非对角元 >= 0，每行和为 0

    Raises:
        GeneratorError: 校验失败时报告具体的行列下标
    """
    a: np.ndarray = field(repr=False)

    def __post_init__(self):
        try:
            a = as_op(self.a)
        except (ValueError, DimensionMismatch) as e:
            raise GeneratorError(str(e)) from e
        n = a.shape[0]
        for i in range(n):
            for j in range(n):
                if i != j and a[i, j] < 0:
                    raise GeneratorError(
                        f"negative off-diagonal rate a[{i}][{j}] = {a[i, j]} (row {i}, col {j})")
            row_sum = a[i].sum()
            if abs(row_sum) > ROW_SUM_TOL * max(1.0, np.abs(a[i]).sum()):
                raise GeneratorError(f"row {i} sums to {row_sum}, expected 0")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def norm(self) -> float:
        return op_norm(self.a)

    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.a)

    @classmethod
    def from_dict(cls, data: Dict) -> Generator:
        """从 {"a": [[...]]} 构造"""
        if "a" not in data:
            raise GeneratorError("generator JSON needs key 'a'")
        return cls(np.asarray(data["a"], dtype=float))

    @classmethod
    def zero(cls, n: int) -> Generator:
        return cls(np.zeros((n, n)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, max_rate: float = 1.0,
               sparsity: float = 0.0) -> Generator:
        """随机保守生成元，sparsity 为非对角元置零的概率"""
        a = rng.uniform(0, max_rate, size=(n, n))
        if sparsity > 0:
            a *= rng.random((n, n)) >= sparsity
        np.fill_diagonal(a, 0.0)
        np.fill_diagonal(a, -a.sum(axis=1))
        return cls(a)

    def to_dict(self) -> Dict:
        return {"a": self.a.tolist()}


@dataclass(frozen=True)
class TransitionKernel:
    """转移核 Q_t（随机矩阵），t 为其对应的时间

    构造时把 [-1e-12, 1 + 1e-12] 内的元素截断到 [0, 1]，超出则报错。
    """
    q: np.ndarray = field(repr=False)
    t: float = 0.0

    def __post_init__(self):
        q = as_op(self.q)
        if q.min() < -CLAMP_TOL or q.max() > 1 + CLAMP_TOL:
            raise KernelError(
                f"kernel entries must lie in [0, 1], got range [{q.min()}, {q.max()}]")
        q = np.clip(q, 0.0, 1.0)
        rows = q.sum(axis=1)
        if np.any(np.abs(rows - 1) > STOCHASTIC_TOL):
            bad = int(np.argmax(np.abs(rows - 1)))
            raise KernelError(f"row {bad} sums to {rows[bad]!r}, expected 1")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def __matmul__(self, other: TransitionKernel) -> TransitionKernel:
        return TransitionKernel(self.q @ other.q, self.t + other.t)


def apply_kernel(k: TransitionKernel, f: Vector) -> np.ndarray:
    """核在函数上的作用 (Qf)(x) = Σ_y Q(x, y) f(y)

    Raises:
        DimensionMismatch: f 的长度与状态数不一致
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (k.n,):
        raise DimensionMismatch(f"function has shape {f.shape}, expected ({k.n},)")
    return k.q @ f


class SemigroupFamily:
    """转移半群 (Q_t)_{t>=0}, Q_t = exp(A t)

    核按精确的时间值缓存（不做插值），最多保留 cache_size 个，超出时淘汰最久未用的；
    缓存的读写由锁保护，可以在线程池中共享。

    Args:
        gen (Generator): 生成元
        cache_size (int, optional): 缓存容量. Defaults to 4096.

    Examples:
        >>> fam = SemigroupFamily(Generator(np.array([[-1., 1.], [1., -1.]])))
        >>> fam.kernel_at(0.5).q[0, 0]  # (1 + e^{-1}) / 2
        0.6839397...
    """

    def __init__(self, gen: Generator, cache_size: int = KERNEL_CACHE_SIZE) -> None:
        if cache_size < 1:
            raise ValueError(f"cache size must be positive, got {cache_size}")
        self.gen = gen
        self.cache_size = cache_size
        self._cache: OrderedDict[float, TransitionKernel] = OrderedDict()
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.gen.n

    def kernel_at(self, t: TimeValue) -> TransitionKernel:
        """Q_t = exp(A t)

        Raises:
            NegativeTime: t < 0
        """
        t = float(t)
        if t < 0:
            raise NegativeTime(t)
        with self._lock:
            kernel = self._cache.get(t)
            if kernel is not None:
                self._cache.move_to_end(t)
                return kernel
        kernel = TransitionKernel(mat_exp(self.gen.a * t), t)
        logger.debug("kernel cache miss at t=%r", t)
        with self._lock:
            kernel = self._cache.setdefault(t, kernel)
            self._cache.move_to_end(t)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return kernel

    def __len__(self) -> int:
        return len(self._cache)


def verify_identity_at_zero(fam: SemigroupFamily) -> float:
    """‖Q_0 - Id‖，对 exp 的级数实现恰好为 0"""
    return op_norm(fam.kernel_at(0.0).q - np.eye(fam.n))


def verify_chapman_kolmogorov(fam: SemigroupFamily, s: float, t: float) -> float:
    """Chapman–Kolmogorov 残差 ‖Q_{s+t} - Q_s Q_t‖"""
    for value in (s, t):
        if value < 0:
            raise NegativeTime(value)
    return op_norm(
        fam.kernel_at(s + t).q - fam.kernel_at(s).q @ fam.kernel_at(t).q)


def strong_continuity_bound(fam: SemigroupFamily, f: Vector, t: float) -> float:
    """‖A‖ · exp(‖A‖ t) · ‖f‖ · t"""
    norm_a = fam.gen.norm
    return norm_a * np.exp(norm_a * t) * float(np.max(np.abs(f))) * t


def verify_strong_continuity(fam: SemigroupFamily, f: Vector,
                             ts: Sequence[float]) -> np.ndarray:
    """强连续性：对每个 t 返回 ‖Q_t f - f‖

    调用方再把结果与 :func:`strong_continuity_bound` 比较。

    Args:
        fam (SemigroupFamily): 半群
        f (Vector): 函数值
        ts (Sequence[float]): 递减的正时间序列

    Returns:
        np.ndarray: 每个 t 的偏差
    """
    f = np.asarray(f, dtype=float)
    ts = [float(t) for t in ts]
    for t in ts:
        if t < 0:
            raise NegativeTime(t)
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError(f"times must be strictly decreasing, got {ts}")
    return np.array(
        [np.max(np.abs(apply_kernel(fam.kernel_at(t), f) - f)) for t in ts])


def verify_contraction(fam: SemigroupFamily, f: Vector,
                       ts: Sequence[float]) -> List[float]:
    """每个 Q_t 都是压缩映射：返回 ‖Q_t f‖，应不超过 ‖f‖"""
    return [
        float(np.max(np.abs(apply_kernel(fam.kernel_at(t), f)))) for t in ts
    ]


def stationary_distribution(gen: Generator) -> np.ndarray:
    """解 πA = 0, Σπ = 1（最小二乘）"""
    n = gen.n
    system = np.vstack([gen.a.T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
