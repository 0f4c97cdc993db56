"""
错误处理和回退机制模块
模型无法插补的条目回退到线性插值；CLI 命令的异常统一映射为退出码
"""

from functools import wraps
from typing import Callable, Dict

from .exceptions import (
    EXIT_INVALID_INPUT,
    EXIT_SUCCESS,
    STImputeException,
    exit_code_for,
    format_exception_for_user,
)
from .logger import logger


class FallbackManager:
    """
    记录没有完整窗口、由回退策略填补的条目

    只统计窗口越界这类结构性缺口；模型本身的失败（非有限输出等）不在这里处理，直接向上抛出
    """

    def __init__(self):
        self.fallback_entries = 0
        self.operations: Dict[str, int] = {}

    def record_fallback(self, operation_name: str, entries: int):
        """记录未经过主操作、直接由回退填补的条目数"""
        if entries <= 0:
            return
        self.fallback_entries += entries
        self.operations[operation_name] = self.operations.get(operation_name, 0) + entries
        logger.info(f"{operation_name}: {entries} entries filled by fallback")
