"""fellerpy - 有限状态 Feller 半群工具箱

fellerpy 在有限度量空间上构造转移半群 Q_t = exp(At)，用算子对数恢复生成元，
精确计算有限维分布的期望，模拟并刻意污染马氏链样本路径，沿典范有理划分测量 ρ̃-变差，
并用右有理极限把任意一个修正正则化为 càdlàg 路径；每一条性质都可以在小规模上数值验证。

Examples:
    基本使用示例:

    .. code-block:: python

        import numpy as np
        from fellerpy import Generator, SemigroupFamily, Distribution

        fam = SemigroupFamily(Generator(np.array([[-1., 1.], [1., -1.]])))
        fam.kernel_at(0.5).q            # [[0.684, 0.316], [0.316, 0.684]]

        # 模拟、污染、正则化
        from fellerpy import simulate_ctmc, corrupt, regularize
        path = simulate_ctmc(fam.gen, Distribution([1., 0.]), 1.5, seed=42)
        rp = regularize(corrupt(path, 1, seed=7), "1")

    命令行:

    .. code-block:: bash

        fellerpy verify-semigroup --config exp.json --out out/

主要模块:
    - metricspace: 有限度量空间与截断度量 ρ̃ = min(1, ρ)
    - opcalc: 算子范数、幂级数 exp / log、生成元恢复
    - semigroup: 生成元、转移核、半群律与强连续性
    - distributions: 有限维分布期望、增量上界常数
    - paths: 路径模拟、污染与有理划分
    - variation: ρ̃-变差与爆破检测
    - regularizer: càdlàg 正则化与审计
    - cli: 命令行与可复现的实验产物
"""

__version__ = "0.1.0"
__author__ = "Benature"
__github__ = "https://github.com/Benature/fellerpy"
__homepage__ = __github__

from .exceptions import FellerError
from .metricspace import FiniteMetricSpace, TruncatedMetric, truncate_metric, sup_norm_rho_tilde
from .opcalc import op_norm, mat_exp, mat_log, recover_generator
from .semigroup import Generator, TransitionKernel, SemigroupFamily, apply_kernel
from .distributions import Distribution, fdd_expectation, expected_truncated_distance, euphoria_bound
from .paths import (RationalPartition, EventPath, CorruptedPath, GridPath, canonical_partition,
                    simulate_ctmc, corrupt, grid_sample)
from .variation import lv, variation_profile, detect_blowup
from .regularizer import LimitScheme, RegularizedPath, regularize, right_limit, left_limit
from .config import ExperimentConfig, ExperimentStore
from .log import create_logger
