"""fellerpy 异常体系 | error taxonomy

所有异常都继承自 :class:`FellerError`，同时继承对应的内置异常
（ValueError / ArithmeticError / RuntimeError / IndexError），
调用方可以按任一层级捕获。
"""
from __future__ import annotations
from typing import List, Sequence


class FellerError(Exception):
    """fellerpy 所有异常的基类"""


class MetricError(FellerError, ValueError):
    """距离矩阵不满足度量公理"""


class GeneratorError(FellerError, ValueError):
    """生成元（速率矩阵）校验失败"""


class KernelError(FellerError, ValueError):
    """转移核不是随机矩阵"""


class DistributionError(FellerError, ValueError):
    """初始分布校验失败"""


class DimensionMismatch(FellerError, ValueError):
    """维度不匹配"""


class ConfigError(FellerError, ValueError):
    """配置文件错误"""


class DomainError(FellerError, ArithmeticError):
    """对数级数在收敛域之外

    Attributes:
        norm (float): op_norm(m - Id)
    """

    def __init__(self, norm: float, message: str = None):
        self.norm = norm
        super().__init__(
            message or
            f"log series requires op_norm(m - Id) < 1, got {norm:.6g}")


class CommutatorError(FellerError, ArithmeticError):
    """两个算子不可交换"""

    def __init__(self, residual: float, tol: float):
        self.residual = residual
        super().__init__(
            f"operators do not commute: op_norm(p1p2 - p2p1) = {residual:.3e} > {tol:.0e}"
        )


class NegativeTime(FellerError, ValueError):

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"time must be non-negative, got {t}")


class InvalidHorizon(FellerError, ValueError):

    def __init__(self, horizon: float):
        self.horizon = horizon
        super().__init__(f"horizon must be positive, got {horizon}")


class TimeOrder(FellerError, ValueError):

    def __init__(self, s: float, t: float):
        self.s, self.t = s, t
        super().__init__(f"expected s <= t, got s={s}, t={t}")


class UnsortedTimes(FellerError, ValueError):

    def __init__(self, times: Sequence[float]):
        self.times = list(times)
        super().__init__(f"times must be non-decreasing, got {self.times}")


class OutOfHorizon(FellerError, IndexError):
    """查询时间不在路径的时间区间 [0, horizon] 内"""

    def __init__(self, t: float, horizon: float):
        self.t, self.horizon = t, horizon
        super().__init__(f"time {t} outside [0, {horizon}]")


class NoStabilization(FellerError, RuntimeError):
    """有理数极限在给定的偏移序列上没有稳定下来"""

    def __init__(self, t: float, side: str, tail: List[int]):
        self.t, self.side, self.tail = t, side, list(tail)
        super().__init__(
            f"{side} rational limit at t={t} did not stabilize, tail={self.tail}")


class ProfileTooShort(FellerError, ValueError):

    def __init__(self, length: int, window: int):
        super().__init__(
            f"profile of length {length} is shorter than 2*window={2 * window}")


class InsufficientConditioningMass(FellerError, RuntimeError):
    """条件期望估计时，某些状态没有足够的样本"""

    def __init__(self, skipped: Sequence):
        self.skipped = list(skipped)
        super().__init__(f"no conditioning mass for cells {self.skipped}")
