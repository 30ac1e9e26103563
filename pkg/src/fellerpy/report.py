"""report - JSON 报告与 CSV 表格的写出

所有报告都带上配置哈希与工具版本；不写入时间戳，同样的配置与种子得到逐字节相同的文件。
"""
from __future__ import annotations
import json
import logging
import math
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _plain(value):
    """把 numpy 标量 / 数组转换成 JSON 可序列化的 Python 对象"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def frame_records(df: pd.DataFrame) -> List[Dict]:
    """DataFrame 转换为逐行字典列表，嵌入 JSON 报告"""
    return _plain(df.to_dict(orient='records'))


def build_report(command: str, config_hash: str, passed: bool, body: Dict) -> Dict:
    from . import __version__
    return {
        "command": command,
        "version": __version__,
        "config_hash": config_hash,
        "passed": bool(passed),
        **_plain(body),
    }


def write_report(report: Dict, file: Path | str) -> Path:
    file = Path(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    with open(file, 'w', encoding='utf-8') as f:
        json.dump(report, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("report written to %s", file)
    return file


def write_table(df: pd.DataFrame, file: Path | str) -> Path:
    """CSV 表格；浮点数用 repr 精度，保证重复运行逐字节一致"""
    file = Path(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(file, index=False, float_format="%.17g")
    return file
