"""metricspace - 有限度量空间与截断度量

状态空间 E 是有限集合，带一个显式的距离矩阵 rho；截断度量 rho_tilde = min(1, rho)
是后面所有增量期望与 ρ̃-变差计算使用的度量。

主要类：
    - FiniteMetricSpace: 状态空间 E 及其度量 rho
    - TruncatedMetric: 截断度量 rho_tilde
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from ._typing import Matrix
from .exceptions import DimensionMismatch, MetricError

logger = logging.getLogger(__name__)

TRIANGLE_SLACK = 1e-12


def _check_metric_axioms(rho: np.ndarray, strict_positive: bool = True) -> None:
    """校验对称性、零对角线、正定性与三角不等式，出错时报告具体的下标"""
    n = rho.shape[0]
    if rho.ndim != 2 or rho.shape[1] != n:
        raise MetricError(f"distance matrix must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise MetricError("distance matrix has non-finite entries")
    for i in range(n):
        if rho[i, i] != 0:
            raise MetricError(f"rho[{i}][{i}] = {rho[i, i]} must be 0")
        for j in range(i + 1, n):
            if rho[i, j] != rho[j, i]:
                raise MetricError(
                    f"rho is not symmetric at ({i}, {j}): {rho[i, j]} != {rho[j, i]}")
            if rho[i, j] < 0 or (strict_positive and rho[i, j] <= 0):
                raise MetricError(
                    f"rho[{i}][{j}] = {rho[i, j]} must be positive for i != j")
    # 向量化检查三角不等式: rho[i,k] <= rho[i,j] + rho[j,k]
    through = rho[:, :, None] + rho[None, :, :]
    excess = rho[:, None, :] - through - TRIANGLE_SLACK
    if np.any(excess > 0):
        i, j, k = np.argwhere(excess > 0)[0]
        raise MetricError(
            f"triangle inequality fails for triple ({i}, {j}, {k}): "
            f"rho[{i}][{k}] = {rho[i, k]} > rho[{i}][{j}] + rho[{j}][{k}] = "
            f"{rho[i, j] + rho[j, k]}")


@dataclass(frozen=True)
class FiniteMetricSpace:
    """有限状态空间 E 与度量 rho

    构造后不可变，可以在多个线程间共享读取。

    Args:
        labels (List[str]): 状态名称，按下标顺序
        rho (np.ndarray): n×n 距离矩阵

    Examples:
        >>> space = FiniteMetricSpace.discrete(["a", "b", "c"])
        >>> space.n
        3
    """
    labels: tuple
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        rho = np.array(self.rho, dtype=float)
        if len(labels) < 1:
            raise MetricError("state space needs at least one state")
        if rho.shape != (len(labels), len(labels)):
            raise DimensionMismatch(
                f"rho has shape {rho.shape}, expected {(len(labels), len(labels))}")
        _check_metric_axioms(rho)
        rho.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "rho", rho)

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @classmethod
    def discrete(cls, labels: Sequence[str] | int) -> FiniteMetricSpace:
        """离散度量：不同状态之间距离为 1"""
        if isinstance(labels, int):
            labels = [str(i) for i in range(labels)]
        n = len(labels)
        return cls(tuple(labels), np.ones((n, n)) - np.eye(n))

    @classmethod
    def from_points(cls, points: Matrix, labels: Sequence[str] = None) -> FiniteMetricSpace:
        """由欧氏空间中的点云构造度量（点必须两两不同）"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        diff = points[:, None, :] - points[None, :, :]
        rho = np.sqrt((diff**2).sum(axis=-1))
        labels = labels or [str(i) for i in range(len(points))]
        return cls(tuple(labels), rho)

    @classmethod
    def from_dict(cls, data: Dict) -> FiniteMetricSpace:
        """从 JSON 结构 {"labels": [...], "rho": [[...]]} 构造，缺省 rho 时为离散度量"""
        labels = data.get("labels")
        rho = data.get("rho")
        if labels is None and rho is None:
            raise MetricError("space needs 'labels' or 'rho'")
        if rho is None:
            return cls.discrete(labels)
        rho = np.asarray(rho, dtype=float)
        labels = labels or [str(i) for i in range(rho.shape[0])]
        return cls(tuple(labels), rho)

    def to_dict(self) -> Dict:
        return {"labels": list(self.labels), "rho": self.rho.tolist()}


@dataclass(frozen=True)
class TruncatedMetric:
    """截断度量 rho_tilde = min(1, rho)，取值在 [0, 1]"""
    rho_tilde: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho_tilde = np.array(self.rho_tilde, dtype=float)
        _check_metric_axioms(rho_tilde, strict_positive=False)
        if rho_tilde.min() < 0 or rho_tilde.max() > 1:
            raise MetricError("truncated metric entries must lie in [0, 1]")
        rho_tilde.setflags(write=False)
        object.__setattr__(self, "rho_tilde", rho_tilde)

    @property
    def n(self) -> int:
        return self.rho_tilde.shape[0]

    def __call__(self, i: int, j: int) -> float:
        return float(self.rho_tilde[i, j])


def truncate_metric(space: FiniteMetricSpace | TruncatedMetric) -> TruncatedMetric:
    """截断度量 rho_tilde = min(1, rho)

    对已经截断的度量再截断一次是恒等映射。

    Args:
        space (FiniteMetricSpace | TruncatedMetric): 状态空间（或已截断的度量）

    Returns:
        TruncatedMetric: 截断后的度量

    Raises:
        MetricError: 输入违反度量公理时，报告违反的下标三元组
    """
    rho = space.rho_tilde if isinstance(space, TruncatedMetric) else space.rho
    rho = np.asarray(rho, dtype=float)
    _check_metric_axioms(rho, strict_positive=isinstance(space, FiniteMetricSpace))
    return TruncatedMetric(np.minimum(1.0, rho))


def sup_norm_rho_tilde(tm: TruncatedMetric) -> float:
    """截断度量的上确界范数 ‖ρ̃‖，即最大元素"""
    return float(tm.rho_tilde.max())


def random_metric_space(n: int, rng: np.random.Generator, dim: int = 2,
                        scale: float = 2.0) -> FiniteMetricSpace:
    """随机点云生成的度量空间，用于性质测试与批量校验"""
    while True:
        points = rng.uniform(0, scale, size=(n, dim))
        rho = np.sqrt(((points[:, None, :] - points[None, :, :])**2).sum(-1))
        off = rho[~np.eye(n, dtype=bool)]
        if n == 1 or off.min() > 0:
            return FiniteMetricSpace(tuple(str(i) for i in range(n)), rho)
