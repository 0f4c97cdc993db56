"""按传感器的 z-score 归一化，统计量只取训练段内可见的条目"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .dataset import STDataset
from .exceptions import ArgumentError


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if (self.std <= 0).any():
            raise ArgumentError("Normalizer", "std", "每个传感器的标准差必须为正")

    @property
    def num_nodes(self) -> int:
        return self.mean.shape[0]

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """values 的最后一维为节点维"""
        return (values - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean

    def permute(self, order) -> "Normalizer":
        order = list(order)
        return Normalizer(self.mean[order].copy(), self.std[order].copy())

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> "Normalizer":
        return cls(np.array(data["mean"], dtype=np.float64), np.array(data["std"], dtype=np.float64))


def fit_normalizer(dataset: STDataset, train_range: Tuple[int, int], visible: np.ndarray) -> Normalizer:
    """
    visible 为组合可见性（原始已观测且未被人工隐藏）

    某个传感器在训练段内没有可见条目时 μ=0, σ=1；方差为 0 时 σ=1
    """
    start, stop = train_range
    if stop <= start:
        raise ArgumentError("fit_normalizer", "train_range", f"训练区间为空: {train_range}")
    values = dataset.values[start:stop]
    seen = visible[start:stop] == 1

    n = dataset.num_nodes
    mean = np.zeros(n)
    std = np.ones(n)
    for node in range(n):
        column = values[seen[:, node], node]
        if column.size == 0:
            continue
        mean[node] = column.mean()
        sigma = column.std()
        if sigma > 0:
            std[node] = sigma
    return Normalizer(mean, std)
