from __future__ import annotations
import datetime
import inspect
import logging
import re
from pathlib import Path

from ._typing import LogLevel

_FORMAT = "%(asctime)s - %(name)s-%(levelname)s %(message)s"


def _default_log_path(stack_depth: int) -> Path:
    """在调用脚本旁边的 log/ 目录下生成带时间戳的日志文件名"""
    try:
        is_ipython = __import__("IPython").get_ipython()
    except ImportError:
        is_ipython = False

    if is_ipython:
        folder = Path.cwd()
    else:
        stack = inspect.stack()
        depth = min(stack_depth, len(stack) - 1)
        folder = Path(stack[depth].filename).resolve().parent
        while re.findall(r'src|utils?|logs?|logging|fellerpy', folder.name,
                         re.IGNORECASE):
            folder = folder.parent
    stamp = datetime.datetime.now().strftime('%Y%m%d-%H%M%S')
    return folder / f"log/fellerpy_{stamp}.log"


def create_logger(
    log_path: Path | str = None,
    level: LogLevel = 'INFO',
    stack_depth: int = 2,
) -> logging.Logger:
    """生成 logger

    控制台 + 文件双输出。重复调用时会替换之前由本函数挂载的 handler，
    同一进程里多次运行命令不会重复打印。

    Args:
        log_path (Path | str, optional): 日志保存路径. Defaults to None.
        level (LogLevel, optional): 日志输出级别. Defaults to 'INFO'.
        stack_depth (int, optional): 栈深度，用于推断默认日志目录. Defaults to 2.

    Returns:
        (logging.Logger): logger对象
    """
    if log_path is None:
        log_path = _default_log_path(stack_depth)
    logger = logging.getLogger()
    logger.setLevel(level)
    formatter = logging.Formatter(_FORMAT)

    for handler in list(logger.handlers):
        if getattr(handler, "_fellerpy", False):
            logger.removeHandler(handler)
            handler.close()

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)

    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(log_path, encoding="utf-8", mode="a")
    file_handler.setFormatter(formatter)

    for handler in (stream_handler, file_handler):
        handler._fellerpy = True
        logger.addHandler(handler)
    return logger
