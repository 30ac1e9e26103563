"""config - 实验配置与命名配置库

ExperimentConfig 描述一次可复现的实验：生成元、度量、初始分布、时长、路径数、种子与各项容差。
ExperimentStore 把配置按名字保存在 ~/.fellerpy/experiments.json 里，命令行的 --config
既可以是文件路径，也可以是已保存的名字。
"""
from __future__ import annotations
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .distributions import Distribution
from .exceptions import ConfigError, DimensionMismatch
from .metricspace import FiniteMetricSpace, TruncatedMetric, truncate_metric
from .semigroup import Generator

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES: Dict[str, float] = {
    "chapman_kolmogorov": 1e-9,
    "identity": 1e-12,
    "stochastic": 1e-10,
    "recovery": 1e-8,
    "roundtrip": 1e-10,
    "strong_continuity": 1e-12,
    "bound_slack": 1e-12,
    "lv_slack": 1e-10,
    "se_multiplier": 3.0,
    "exempt_fraction": 0.01,
}

DEFAULT_MARKOV_PAIRS = [[s, t] for s in (0.1, 0.3, 0.5) for t in (0.1, 0.3, 0.5)]


@dataclass
class ExperimentConfig:
    """一次实验的全部输入

    必填：generator (n×n)、gamma (长度 n)、horizon、k_max、n_paths、seed、corruption_count。
    metric 缺省为离散度量；markov_f 缺省为状态 0 的示性函数；n_cadlag_paths 缺省为 min(n_paths, 1000)。

    Examples:
        >>> cfg = ExperimentConfig.from_dict({
        ...     "generator": [[-1, 1], [1, -1]], "gamma": [1, 0], "horizon": 1.5,
        ...     "k_max": 50, "n_paths": 1000, "seed": 42, "corruption_count": 1})
        >>> cfg.validate().n
        2
    """
    generator: List[List[float]]
    gamma: List[float]
    horizon: float
    k_max: int
    n_paths: int
    seed: int
    corruption_count: int
    metric: Optional[List[List[float]]] = None
    labels: Optional[List[str]] = None
    tolerances: Dict[str, float] = field(default_factory=dict)
    horizon_T: str = "1"
    window: int = 5
    growth_tol: float = 0.0
    fallback: int = 0
    n_audit: int = 1000
    markov_pairs: List[List[float]] = field(default_factory=lambda: [list(p) for p in DEFAULT_MARKOV_PAIRS])
    markov_f: Optional[List[float]] = None
    export_k: int = 8
    n_cadlag_paths: Optional[int] = None
    grid_size: int = 50

    def __post_init__(self):
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        if self.n_cadlag_paths is None:
            self.n_cadlag_paths = min(self.n_paths, 1000)

    @classmethod
    def from_dict(cls, data: Dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"incomplete config: {e}") from e

    @classmethod
    def from_file(cls, path: Path | str) -> ExperimentConfig:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)

    def config_hash(self) -> str:
        """规范化 JSON（键排序）的 SHA-256"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # -- 派生对象 ----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.generator)

    def build_generator(self) -> Generator:
        return Generator(np.asarray(self.generator, dtype=float))

    def build_distribution(self) -> Distribution:
        return Distribution(np.asarray(self.gamma, dtype=float))

    def build_space(self) -> FiniteMetricSpace:
        data = {"labels": self.labels or [str(i) for i in range(self.n)]}
        if self.metric is not None:
            data["rho"] = self.metric
        return FiniteMetricSpace.from_dict(data)

    def build_metric(self) -> TruncatedMetric:
        return truncate_metric(self.build_space())

    def build_f(self) -> np.ndarray:
        if self.markov_f is None:
            f = np.zeros(self.n)
            f[0] = 1.0
            return f
        return np.asarray(self.markov_f, dtype=float)

    @property
    def horizon_fraction(self) -> Fraction:
        return Fraction(self.horizon_T)

    def markov_times(self) -> List[Tuple[float, float]]:
        return [(float(s), float(t)) for s, t in self.markov_pairs]

    def validate(self) -> ExperimentConfig:
        """构造 Generator / Distribution / FiniteMetricSpace，任何不一致都在命令运行之前抛出

        Raises:
            ConfigError: 参数取值非法
            FellerError: 生成元、分布或度量本身的校验错误
        """
        gen = self.build_generator()
        gamma = self.build_distribution()
        space = self.build_space()
        if gamma.n != gen.n or space.n != gen.n:
            raise DimensionMismatch(
                f"generator has {gen.n} states, gamma {gamma.n}, metric {space.n}")
        if self.build_f().shape != (gen.n, ):
            raise DimensionMismatch(f"markov_f must have {gen.n} entries")
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        try:
            horizon_T = self.horizon_fraction
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"horizon_T must be a rational string, got {self.horizon_T!r}") from e
        if not 0 < horizon_T < self.horizon:
            raise ConfigError(f"horizon_T={horizon_T} must lie in (0, horizon={self.horizon})")
        for name in ("k_max", "n_paths", "n_audit", "export_k", "grid_size", "window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.k_max < 2 * self.window:
            raise ConfigError(f"k_max={self.k_max} is shorter than 2 * window={2 * self.window}")
        if self.corruption_count < 0:
            raise ConfigError(f"corruption_count must be >= 0, got {self.corruption_count}")
        if not 0 <= self.fallback < gen.n:
            raise ConfigError(f"fallback state {self.fallback} outside 0..{gen.n - 1}")
        for s, t in self.markov_times():
            if s < 0 or t < 0:
                raise ConfigError(f"markov pair ({s}, {t}) has a negative time")
        return self


class ExperimentStore:
    """命名实验配置库

    Args:
        config_file (str, optional): 配置文件路径，默认为 ~/.fellerpy/experiments.json

    Examples:
        >>> store = ExperimentStore()
        >>> store.save_config('two-state', cfg)
        >>> cfg = store.get_config('two-state')
    """

    def __init__(self, config_file: str = None):
        self.config_file = Path(config_file) if config_file else Path.home(
        ) / '.fellerpy' / 'experiments.json'
        self.config_file.parent.mkdir(parents=True, exist_ok=True)
        self.config = self._load_config()

    def _load_config(self) -> dict:
        if self.config_file.exists():
            try:
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    return json.load(f)
            except (OSError, json.JSONDecodeError):
                logger.warning("could not read %s, starting an empty store", self.config_file)
                return {}
        return {}

    def save_config(self, name: str, config: ExperimentConfig):
        self.config[name] = config.to_dict()
        with open(self.config_file, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, ensure_ascii=False, indent=2)

    def get_config(self, name: str) -> Optional[ExperimentConfig]:
        """按名字取出配置，不存在时返回 None"""
        data = self.config.get(name)
        return None if data is None else ExperimentConfig.from_dict(data)

    def names(self) -> List[str]:
        return sorted(self.config)


def load_config(source: str, store: ExperimentStore = None) -> ExperimentConfig:
    """--config 的解析：先当作文件路径，不存在时再到配置库里按名字查找

    Raises:
        ConfigError: 既不是文件也不是已保存的名字
    """
    if Path(source).exists():
        return ExperimentConfig.from_file(source)
    store = store or ExperimentStore()
    config = store.get_config(source)
    if config is None:
        raise ConfigError(f"{source!r} is neither a config file nor a stored experiment")
    return config
