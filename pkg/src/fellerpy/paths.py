"""paths - 样本路径：模拟、求值、有理划分与零测集污染

主要类：
    - RationalPartition: 精确有理数划分，支持加细、mesh 与子集判定
    - EventPath: 跳跃记录表示的 càdlàg 路径（右连续求值）
    - CorruptedPath: 在有限个连续分布的随机时刻被篡改的路径（原路径的一个修正，但不是 càdlàg）
    - DenominatorPath: 合成的对抗路径，ρ̃-变差沿典范划分链发散
    - GridPath: 路径在划分点上的取样

所有集成（ensemble）的随机性都由 (master_seed, replicate_index) 派生，
结果与线程数、调度顺序无关。
"""
from __future__ import annotations
import bisect
import functools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ._typing import Jump, Rational, TimeValue
from .distributions import Distribution
from .exceptions import DimensionMismatch, InvalidHorizon, OutOfHorizon
from .semigroup import Generator

logger = logging.getLogger(__name__)

THREADS_ENV = "FELLER_THREADS"


def resolve_workers(workers: int = None) -> int:
    """线程数：显式参数优先，其次环境变量 FELLER_THREADS，最后 CPU 数"""
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def replicate_seed(master_seed: int, index: int, stream: int = 0) -> np.random.SeedSequence:
    """第 index 个重复实验的随机流，stream 区分模拟 / 污染 / 审计"""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(index)))


def as_fraction(value: Rational) -> Fraction:
    if isinstance(value, float):
        return Fraction(value).limit_denominator()
    return Fraction(value)


# ---------------------------------------------------------------------------
# 有理划分
# ---------------------------------------------------------------------------


class RationalPartition:
    """[a, b] 的有理数划分，端点包含在内

    Args:
        points (Iterable[Rational]): 严格递增的有理数；也接受 "num/den" 字符串

    Examples:
        >>> p = RationalPartition(["0", "1/3", "1/2", "2/3", "1"])
        >>> p.mesh
        Fraction(1, 3)
    """

    def __init__(self, points: Iterable[Rational]) -> None:
        points = tuple(as_fraction(p) for p in points)
        if len(points) < 2:
            raise ValueError("a partition needs at least two points")
        for left, right in zip(points, points[1:]):
            if not left < right:
                raise ValueError(f"partition points must be strictly increasing: {left} >= {right}")
        self.points = points
        self._set = frozenset(points)
        self._floats = None

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Fraction]:
        return iter(self.points)

    def __contains__(self, value) -> bool:
        return as_fraction(value) in self._set

    def __eq__(self, other) -> bool:
        return isinstance(other, RationalPartition) and self.points == other.points

    def __hash__(self) -> int:
        return hash(self.points)

    def __repr__(self) -> str:
        return f"RationalPartition([{self.start}, {self.end}], {len(self)} points)"

    @property
    def start(self) -> Fraction:
        return self.points[0]

    @property
    def end(self) -> Fraction:
        return self.points[-1]

    @property
    def mesh(self) -> Fraction:
        return max(b - a for a, b in zip(self.points, self.points[1:]))

    def issubset(self, other: RationalPartition) -> bool:
        """精确的子集判定 π ⊆ π'"""
        return self._set <= other._set

    __le__ = issubset

    def refine(self, other: RationalPartition) -> RationalPartition:
        """两个划分的公共加细（并集），要求端点一致"""
        if (self.start, self.end) != (other.start, other.end):
            raise ValueError("partitions must cover the same interval")
        return RationalPartition(sorted(self._set | other._set))

    def as_floats(self) -> np.ndarray:
        if self._floats is None:
            floats = np.array([float(p) for p in self.points])
            floats.setflags(write=False)
            self._floats = floats
        return self._floats

    def levels(self) -> np.ndarray:
        """每个点首次出现在典范划分链中的下标 k（约分后的分母；右端点 T 记为 1）"""
        levels = np.array([p.denominator for p in self.points])
        levels[0] = 1
        levels[-1] = 1
        return levels

    def to_strings(self) -> List[str]:
        return [f"{p.numerator}/{p.denominator}" for p in self.points]

    @classmethod
    def from_strings(cls, lines: Iterable[str]) -> RationalPartition:
        return cls(Fraction(line.strip()) for line in lines if line.strip())


def farey_sequence(k: int) -> Iterator[Fraction]:
    """[0, 1] 中分母不超过 k 的既约分数，按递增顺序（相邻项递推）"""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    a, b, c, d = 0, 1, 1, k
    yield Fraction(a, b)
    while c <= k:
        m = (k + b) // d
        a, b, c, d = c, d, m * c - a, m * d - b
        yield Fraction(a, b)


def canonical_partition(horizon_T: Rational, k: int) -> RationalPartition:
    """典范划分 τ_k^T = ({T} ∪ {p/q : gcd(p, q) = 1, q <= k}) ∩ [0, T]

    τ_k^T ⊆ τ_{k+1}^T，mesh <= 1，且所有 τ_k^T 的并是 [0, T] 中的全部有理数。
    结果按 (T, k) 缓存，划分对象本身不可变，可以共享。

    Args:
        horizon_T (Rational): T > 0
        k (int): 最大分母 k >= 1

    Returns:
        RationalPartition: τ_k^T
    """
    horizon_T = as_fraction(horizon_T)
    if not horizon_T > 0:
        raise InvalidHorizon(horizon_T)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return _canonical_partition(horizon_T, int(k))


@functools.lru_cache(maxsize=64)
def _canonical_partition(horizon_T: Fraction, k: int) -> RationalPartition:
    base = list(farey_sequence(k))[:-1]
    points = {horizon_T}
    for shift in range(math.floor(horizon_T) + 1):
        for f in base:
            x = shift + f
            if x > horizon_T:
                break
            points.add(x)
    return RationalPartition(sorted(points))


# ---------------------------------------------------------------------------
# 路径
# ---------------------------------------------------------------------------


def _check_time(t: float, horizon: float) -> float:
    t = float(t)
    if not 0 <= t <= horizon:
        raise OutOfHorizon(t, horizon)
    return t


def _check_times(times, horizon: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > horizon):
        bad = times.min() if times.min() < 0 else times.max()
        raise OutOfHorizon(float(bad), horizon)
    return times


@dataclass(frozen=True)
class EventPath:
    """跳跃记录表示的 càdlàg 路径

    Args:
        initial_state (int): 初始状态
        jumps (Tuple[Jump, ...]): (跳跃时刻, 新状态)，时刻严格递增且小于 horizon
        horizon (float): 时间区间 [0, horizon]
        n_states (int): 状态总数
    """
    initial_state: int
    jumps: Tuple[Jump, ...]
    horizon: float
    n_states: int
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _states: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        jumps = tuple((float(t), int(s)) for t, s in self.jumps)
        if not self.horizon > 0:
            raise InvalidHorizon(self.horizon)
        states = [int(self.initial_state)] + [s for _, s in jumps]
        times = [t for t, _ in jumps]
        for s in states:
            if not 0 <= s < self.n_states:
                raise DimensionMismatch(f"state {s} outside 0..{self.n_states - 1}")
        for i, t in enumerate(times):
            if not 0 < t < self.horizon:
                raise ValueError(f"jump time {t} outside (0, {self.horizon})")
            if i and not times[i - 1] < t:
                raise ValueError(f"jump times must be strictly increasing at index {i}")
            if states[i] == states[i + 1]:
                raise ValueError(f"jump at {t} does not change the state")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "_times", np.array(times, dtype=float))
        object.__setattr__(self, "_states", np.array(states, dtype=int))

    @property
    def jump_times(self) -> np.ndarray:
        return self._times

    def states(self) -> np.ndarray:
        """初始状态加上每次跳跃后的状态"""
        return self._states

    def eval_at(self, t: TimeValue) -> int:
        """右连续求值：t 之前（含 t）最后一次跳跃后的状态"""
        t = _check_time(t, self.horizon)
        return int(self._states[bisect.bisect_right(self.jump_times, t)])

    def eval_many(self, times: np.ndarray) -> np.ndarray:
        """向量化的右连续求值"""
        times = _check_times(times, self.horizon)
        return self._states[np.searchsorted(self._times, times, side="right")]

    def eval_grid(self, partition: RationalPartition) -> np.ndarray:
        return self.eval_many(partition.as_floats())

    def n_jumps(self, upto: float = None) -> int:
        if upto is None:
            return len(self.jumps)
        return int(np.searchsorted(self._times, float(upto), side="right"))


@dataclass(frozen=True)
class CorruptedPath:
    """在有限个随机时刻被篡改的路径

    对任何与污染无关的固定时刻 t，两条路径不一致的概率为 0（原路径的修正），
    但在每个污染时刻都不右连续。
    """
    base: EventPath
    corruptions: Tuple[Jump, ...]
    _lookup: Dict[float, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        corruptions = tuple(sorted((float(t), int(s)) for t, s in self.corruptions))
        lookup = {}
        jump_set = set(self.base.jump_times.tolist())
        for t, s in corruptions:
            if not 0 < t < self.base.horizon:
                raise ValueError(f"corruption time {t} outside (0, {self.base.horizon})")
            if t in lookup or t in jump_set:
                raise ValueError(f"corruption time {t} collides with another event")
            if not 0 <= s < self.base.n_states:
                raise DimensionMismatch(f"state {s} outside 0..{self.base.n_states - 1}")
            lookup[t] = s
        object.__setattr__(self, "corruptions", corruptions)
        object.__setattr__(self, "_lookup", lookup)

    @property
    def horizon(self) -> float:
        return self.base.horizon

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def corruption_times(self) -> List[float]:
        return [t for t, _ in self.corruptions]

    def eval_at(self, t: TimeValue) -> int:
        t = _check_time(t, self.horizon)
        state = self._lookup.get(t)
        return self.base.eval_at(t) if state is None else state

    def eval_many(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        states = self.base.eval_many(times).copy()
        for i in np.flatnonzero(np.isin(times, self.corruption_times)):
            states[i] = self._lookup[float(times[i])]
        return states

    def eval_grid(self, partition: RationalPartition) -> np.ndarray:
        return self.eval_many(partition.as_floats())


@dataclass(frozen=True)
class DenominatorPath:
    """合成的对抗路径：在既约有理数 p/q 处取状态 q mod n_states，其余时刻取状态 0

    当 n_states > k_max 时，离散度量下它的 ρ̃-变差在典范划分链的每一步 k >= 2 都严格增加。
    浮点输入先用 limit_denominator 识别为有理数。
    """
    n_states: int
    horizon: float
    max_denominator: int = 10**6

    def _state(self, t: TimeValue) -> int:
        if isinstance(t, Fraction):
            return t.denominator % self.n_states
        guess = Fraction(t).limit_denominator(self.max_denominator)
        if abs(float(guess) - t) <= 1e-15 * max(1.0, abs(t)):
            return guess.denominator % self.n_states
        return 0

    def eval_at(self, t: TimeValue) -> int:
        if isinstance(t, Fraction):
            _check_time(float(t), self.horizon)
            return self._state(t)
        return self._state(_check_time(t, self.horizon))

    def eval_grid(self, partition: RationalPartition) -> np.ndarray:
        if partition.start < 0 or float(partition.end) > self.horizon:
            raise OutOfHorizon(float(partition.end), self.horizon)
        return np.array([self._state(p) for p in partition.points], dtype=int)


@dataclass(frozen=True)
class GridPath:
    """路径在划分点上的取样，LV 泛函的输入"""
    partition: RationalPartition
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=int)
        if states.shape != (len(self.partition), ):
            raise DimensionMismatch(
                f"{states.size} states for a partition of {len(self.partition)} points")
        object.__setattr__(self, "states", states)

    def n_changes(self) -> int:
        return int(np.count_nonzero(self.states[1:] != self.states[:-1]))


def eval_at(path, t: TimeValue) -> int:
    """任意路径对象在 t 处的取值（EventPath 右连续；CorruptedPath 在污染时刻返回污染状态）"""
    return path.eval_at(t)


def grid_sample(path, partition: RationalPartition) -> GridPath:
    """把路径限制到划分上：states[i] = eval_at(path, points[i])

    Raises:
        OutOfHorizon: 划分超出路径的时间区间
    """
    if partition.start < 0:
        raise OutOfHorizon(float(partition.start), path.horizon)
    eval_grid = getattr(path, "eval_grid", None)
    if eval_grid is not None:
        states = eval_grid(partition)
    else:
        states = [path.eval_at(p) for p in partition.points]
    return GridPath(partition, states)


# ---------------------------------------------------------------------------
# 模拟与污染
# ---------------------------------------------------------------------------


def _jump_cdf(gen: Generator) -> Tuple[np.ndarray, np.ndarray]:
    rates = gen.exit_rates()
    probs = np.where(rates[:, None] > 0, gen.a / np.where(rates > 0, rates, 1.0)[:, None], 0.0)
    np.fill_diagonal(probs, 0.0)
    return rates, np.cumsum(probs, axis=1)


def simulate_ctmc(gen: Generator, gamma: Distribution, horizon: float,
                  seed: int | np.random.SeedSequence) -> EventPath:
    """跳链构造的连续时间马氏链路径

    初始状态服从 gamma；状态 i 的停留时间服从速率 -a[i][i] 的指数分布；
    以概率 a[i][j] / (-a[i][i]) 跳到 j != i；速率为 0 的状态永久停留。给定 seed 时结果确定。

    Args:
        gen (Generator): 生成元
        gamma (Distribution): 初始分布
        horizon (float): 模拟时长 > 0
        seed (int | np.random.SeedSequence): 随机种子

    Returns:
        EventPath: 模拟的路径

    Raises:
        InvalidHorizon: horizon <= 0
    """
    if not horizon > 0:
        raise InvalidHorizon(horizon)
    if gamma.n != gen.n:
        raise DimensionMismatch(f"distribution has {gamma.n} states, generator has {gen.n}")
    rng = np.random.default_rng(seed)
    rates, cdf = _jump_cdf(gen)
    state = int(rng.choice(gen.n, p=gamma.gamma))
    initial, t, jumps = state, 0.0, []
    while rates[state] > 0:
        t += rng.exponential(1.0 / rates[state])
        if t >= horizon:
            break
        u = rng.random() * cdf[state, -1]
        state = int(np.searchsorted(cdf[state], u, side="right"))
        jumps.append((t, state))
    return EventPath(initial, tuple(jumps), float(horizon), gen.n)


def simulate_ensemble(gen: Generator, gamma: Distribution, horizon: float, n_paths: int,
                      master_seed: int, workers: int = None) -> List[EventPath]:
    """并行模拟 n_paths 条路径；第 i 条使用随机流 (master_seed, i)"""
    workers = resolve_workers(workers)
    logger.debug("simulating %d paths on %d workers", n_paths, workers)

    def one(index: int) -> EventPath:
        return simulate_ctmc(gen, gamma, horizon, replicate_seed(master_seed, index))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_paths)))


def corrupt(path: EventPath, count: int, seed: int | np.random.SeedSequence) -> CorruptedPath:
    """在 (0, horizon) 上均匀抽取 count 个污染时刻，每个时刻赋予一个随机的错误状态

    Args:
        path (EventPath): 干净路径
        count (int): 污染点个数 >= 1
        seed (int | np.random.SeedSequence): 随机种子

    Returns:
        CorruptedPath: 污染后的路径
    """
    if count < 1:
        raise ValueError(f"corruption count must be >= 1, got {count}")
    if path.n_states < 2:
        raise ValueError("cannot corrupt a path on a single-state space")
    rng = np.random.default_rng(seed)
    taken = set(path.jump_times.tolist())
    corruptions = []
    while len(corruptions) < count:
        t = float(rng.uniform(0.0, path.horizon))
        if t <= 0.0 or t in taken:
            continue
        taken.add(t)
        clean = path.eval_at(t)
        wrong = int(rng.integers(path.n_states - 1))
        corruptions.append((t, wrong if wrong < clean else wrong + 1))
    return CorruptedPath(path, tuple(corruptions))


def corrupt_ensemble(paths: Sequence[EventPath], count: int, master_seed: int,
                     workers: int = None) -> List[CorruptedPath]:
    workers = resolve_workers(workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(
            pool.map(lambda i: corrupt(paths[i], count, replicate_seed(master_seed, i, stream=1)),
                     range(len(paths))))


def empirical_marginal(paths: Sequence, t: TimeValue, n_states: int) -> Tuple[np.ndarray, np.ndarray]:
    """t 时刻状态的经验分布及其二项标准误"""
    values = np.array([p.eval_at(t) for p in paths], dtype=int)
    freq = np.bincount(values, minlength=n_states) / len(values)
    se = np.sqrt(freq * (1 - freq) / len(values))
    return freq, se


# ---------------------------------------------------------------------------
# CSV 读写
# ---------------------------------------------------------------------------


def path_frame(path: EventPath) -> pd.DataFrame:
    """路径的 "time,state" 表；第 0 行是 (0.0, 初始状态)"""
    times = [0.0] + [t for t, _ in path.jumps]
    return pd.DataFrame({"time": times, "state": path.states().tolist()})


def write_path_csv(path: EventPath, file: Path | str) -> None:
    path_frame(path).to_csv(file, index=False)


def read_path_csv(file: Path | str, horizon: float, n_states: int) -> EventPath:
    df = pd.read_csv(file, float_precision="round_trip")
    if list(df.columns) != ["time", "state"]:
        raise ValueError(f"{file}: expected header 'time,state', got {list(df.columns)}")
    states = df["state"].astype(int).tolist()
    jumps = tuple(zip(df["time"].astype(float).tolist()[1:], states[1:]))
    return EventPath(states[0], jumps, horizon, n_states)


def write_corruptions_csv(path: CorruptedPath, file: Path | str) -> None:
    df = pd.DataFrame(list(path.corruptions), columns=["time", "state"])
    df.to_csv(file, index=False)


def read_corruptions_csv(base: EventPath, file: Path | str) -> CorruptedPath:
    df = pd.read_csv(file, float_precision="round_trip")
    corruptions = tuple(zip(df["time"].astype(float), df["state"].astype(int)))
    return CorruptedPath(base, corruptions)


def write_partition(partition: RationalPartition, file: Path | str) -> None:
    Path(file).write_text("\n".join(partition.to_strings()) + "\n", encoding="utf-8")


def read_partition(file: Path | str) -> RationalPartition:
    return RationalPartition.from_strings(Path(file).read_text(encoding="utf-8").splitlines())
