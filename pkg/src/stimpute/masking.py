"""
人工缺失掩码
在原始已观测的位置上按伯努利分布随机隐藏条目，用于训练目标和评估
"""

from dataclasses import dataclass

import numpy as np

from .dataset import STDataset
from .exceptions import ConfigValidationError
from .hash_utils import sensor_key

MASK_MODES = ("random",)


@dataclass(frozen=True)
class MaskSpec:
    missing_rate: float
    seed: int = 0
    mode: str = "random"

    def __post_init__(self):
        rate = self.missing_rate
        if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not 0.0 <= rate <= 1.0:
            raise ConfigValidationError("mask.missing_rate", rate, "必须位于 [0, 1] 区间")
        if self.mode not in MASK_MODES:
            raise ConfigValidationError("mask.mode", self.mode, f"可选值: {', '.join(MASK_MODES)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigValidationError("mask.seed", self.seed, "必须为非负整数")


def mask_rng(seed: int, sensor_id: str) -> np.random.Generator:
    """每个传感器一条独立的 PCG64 流，跨平台逐位可复现"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, sensor_key(sensor_id)])))


def generate_mask(dataset: STDataset, spec: MaskSpec) -> np.ndarray:
    """
    返回 eval_mask [T×N]，1 表示被人工隐藏

    每列按传感器 ID 派生随机流，并对整列（而不是只对已观测条目）抽样：
    同一种子下掩码与原始缺失模式、传感器列顺序都无关
    """
    u = np.empty(dataset.values.shape)
    for node, sensor_id in enumerate(dataset.sensor_ids):
        u[:, node] = mask_rng(spec.seed, sensor_id).random(dataset.num_steps)
    hidden = (u < spec.missing_rate) & (dataset.native_mask == 1)
    return hidden.astype(np.float64)


def combined_visibility(dataset: STDataset, eval_mask: np.ndarray) -> np.ndarray:
    """模型可见的条目：原始已观测且未被人工隐藏"""
    return ((dataset.native_mask == 1) & (eval_mask == 0)).astype(np.float64)


def masked_fraction(dataset: STDataset, eval_mask: np.ndarray) -> float:
    observed = float((dataset.native_mask == 1).sum())
    if observed == 0:
        return 0.0
    return float(eval_mask.sum()) / observed
