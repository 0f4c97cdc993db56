"""
经典插补基线
在矩阵层面工作：可见条目保持原值，不可见条目按基线规则填补
"""

from enum import Enum
from typing import List

import numpy as np
import pandas as pd

from .dataset import STDataset
from .exceptions import ConfigValidationError
from .logger import logger


class BaselineKind(str, Enum):
    LINEAR_INTERPOLATION = "linear_interpolation"
    HISTORICAL_MEAN = "historical_mean"
    LAST_OBSERVATION = "last_observation"

    @classmethod
    def parse(cls, value: str) -> "BaselineKind":
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ConfigValidationError(
                "evaluation.baselines", value, f"可选值: {', '.join(k.value for k in cls)}"
            )

    @classmethod
    def names(cls) -> List[str]:
        return [k.value for k in cls]


def _visible_frame(dataset: STDataset, visible: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(np.where(visible == 1, dataset.values, np.nan))


def _linear_interpolation(dataset: STDataset, visible: np.ndarray) -> np.ndarray:
    out = np.full(dataset.values.shape, np.nan)
    steps = np.arange(dataset.num_steps, dtype=np.float64)
    for node in range(dataset.num_nodes):
        seen = visible[:, node] == 1
        if not seen.any():
            continue
        # np.interp 在两端取最近可见值，即常数外推
        out[:, node] = np.interp(steps, steps[seen], dataset.values[seen, node])
    return out


def _historical_mean(dataset: STDataset, visible: np.ndarray) -> np.ndarray:
    frame = _visible_frame(dataset, visible)
    slots = dataset.time_of_day_index()
    by_slot = frame.groupby(slots).transform("mean")
    return by_slot.fillna(frame.mean()).to_numpy()


def _last_observation(dataset: STDataset, visible: np.ndarray) -> np.ndarray:
    return _visible_frame(dataset, visible).ffill().bfill().to_numpy()


_IMPUTERS = {
    BaselineKind.LINEAR_INTERPOLATION: _linear_interpolation,
    BaselineKind.HISTORICAL_MEAN: _historical_mean,
    BaselineKind.LAST_OBSERVATION: _last_observation,
}


def baseline_impute(kind: BaselineKind, dataset: STDataset, visible: np.ndarray) -> np.ndarray:
    """
    visible 为组合可见性（1 = 可用作输入）

    某个传感器完全不可见时用全部可见条目的均值填补（没有任何可见条目时为 0）
    """
    kind = BaselineKind(kind)
    filled = _IMPUTERS[kind](dataset, visible)

    remaining = np.isnan(filled)
    if remaining.any():
        seen = visible == 1
        global_mean = float(dataset.values[seen].mean()) if seen.any() else 0.0
        columns = sorted(set(np.nonzero(remaining)[1].tolist()))
        logger.debug(f"{kind.value}: sensors {columns} fully masked, using global mean {global_mean:.4f}")
        filled = np.where(remaining, global_mean, filled)

    return np.where(visible == 1, dataset.values, filled)
