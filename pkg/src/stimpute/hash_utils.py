"""
哈希工具模块
提供配置指纹、数组摘要和派生种子，保证各模块记录的元数据一致
"""

import hashlib
import json
from typing import Any, Dict

import numpy as np

SEED_MASK = (1 << 64) - 1


def config_fingerprint(config: Dict[str, Any]) -> str:
    """
    运行配置的指纹

    规则：
    - 键排序后序列化为紧凑 JSON
    - sha256 后取前 16 位
    """
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def array_digest(values: np.ndarray) -> str:
    """
    数组内容摘要（包含形状和 dtype），用于确定性校验

    NaN 按位参与哈希，所以相同缺失模式得到相同摘要
    """
    arr = np.ascontiguousarray(values)
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode("utf-8"))
    h.update(str(arr.shape).encode("utf-8"))
    h.update(arr.tobytes())
    return h.hexdigest()[:16]


def derive_seed(seed: int, index: int) -> int:
    """
    按缺失率序号派生种子: seed XOR index

    同一缺失率在不同方法间共享掩码，不同缺失率之间相互独立
    """
    return (int(seed) ^ int(index)) & SEED_MASK


def sensor_key(sensor_id: str) -> int:
    """传感器 ID 的稳定 64 位整数键（与列顺序无关）"""
    return int(hashlib.sha256(str(sensor_id).encode("utf-8")).hexdigest()[:16], 16)
