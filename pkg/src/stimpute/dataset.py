"""
传感器 × 时间观测矩阵及其 CSV 读写

CSV 格式：表头 `timestamp,<sensor_id>,...`，每行一个时间步，空单元格表示原始缺失
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import DataFormatError, EmptyDatasetError, ParseError
from .logger import logger

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)

TimeRange = Tuple[int, int]


@dataclass
class STDataset:
    """
    观测矩阵 values [T×N]（原始缺失处为 NaN）与 native_mask [T×N]（1 = 已观测）

    构造后视为不可变；切片和重排都返回新对象
    """

    values: np.ndarray
    native_mask: np.ndarray
    sensor_ids: List[str]
    interval_minutes: int = 5
    timestamps: Optional[List[str]] = None
    name: str = "dataset"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.native_mask = np.asarray(self.native_mask, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataFormatError(self.name, f"values 必须是 [T×N] 矩阵，实际形状 {self.values.shape}")
        if self.native_mask.shape != self.values.shape:
            raise DataFormatError(self.name, "native_mask 与 values 形状不一致")
        if len(self.sensor_ids) != self.values.shape[1]:
            raise DataFormatError(self.name, "sensor_ids 数量与列数不一致")
        if self.interval_minutes <= 0:
            raise DataFormatError(self.name, "interval_minutes 必须为正整数")
        if np.isnan(self.values[self.native_mask == 1]).any():
            raise DataFormatError(self.name, "已观测位置出现 NaN")
        if self.timestamps is not None and len(self.timestamps) != self.values.shape[0]:
            raise DataFormatError(self.name, "timestamps 数量与行数不一致")

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.values.shape[1]

    def observed_values(self) -> np.ndarray:
        """原始缺失处填 0 的矩阵"""
        return np.where(self.native_mask == 1, self.values, 0.0)

    def slice_time(self, start: int, stop: int) -> "STDataset":
        return STDataset(
            values=self.values[start:stop].copy(),
            native_mask=self.native_mask[start:stop].copy(),
            sensor_ids=list(self.sensor_ids),
            interval_minutes=self.interval_minutes,
            timestamps=self.timestamps[start:stop] if self.timestamps is not None else None,
            name=self.name,
            metadata=dict(self.metadata),
        )

    def permute_nodes(self, order: Sequence[int]) -> "STDataset":
        order = list(order)
        return STDataset(
            values=self.values[:, order].copy(),
            native_mask=self.native_mask[:, order].copy(),
            sensor_ids=[self.sensor_ids[i] for i in order],
            interval_minutes=self.interval_minutes,
            timestamps=list(self.timestamps) if self.timestamps is not None else None,
            name=self.name,
            metadata=dict(self.metadata),
        )

    def time_of_day_index(self) -> np.ndarray:
        """每个时间步在一天中的槽位序号（按采样间隔，从第 0 行起算）"""
        slots_per_day = max(1, (24 * 60) // self.interval_minutes)
        return np.arange(self.num_steps) % slots_per_day


def split_ranges(num_steps: int, fractions: Tuple[float, float, float] = SPLIT_FRACTIONS) -> Dict[str, TimeRange]:
    """按时间顺序连续切分 train / val / test"""
    train_end = int(round(num_steps * fractions[0]))
    val_end = int(round(num_steps * (fractions[0] + fractions[1])))
    return {
        "train": (0, train_end),
        "val": (train_end, val_end),
        "test": (val_end, num_steps),
    }


def _infer_interval(timestamps: pd.Series) -> int:
    if len(timestamps) < 2:
        return 5
    deltas = timestamps.diff().dropna()
    minutes = int(round(deltas.min().total_seconds() / 60))
    return minutes if minutes > 0 else 5


def _check_row_lengths(path: Path) -> int:
    """返回数据行数；列数与表头不一致时抛 ParseError"""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header:
            raise EmptyDatasetError(str(path))
        rows = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    str(path), line_no, f"有 {len(row)} 列，表头有 {len(header)} 列"
                )
            rows += 1
    return rows


def load_matrix_csv(path: Union[str, Path], interval_minutes: Optional[int] = None) -> STDataset:
    """
    读取 `timestamp,<sensor_id>,...` 格式的 CSV

    时间戳必须严格递增；interval_minutes 未给出时按最小时间差推断
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(str(path), "文件不存在")
    if _check_row_lengths(path) == 0:
        raise EmptyDatasetError(str(path))

    frame = pd.read_csv(
        path,
        float_precision="round_trip",
        keep_default_na=False,
        na_values=[""],
        dtype={"timestamp": str},
    )
    if frame.columns[0] != "timestamp":
        raise DataFormatError(str(path), f"第一列应为 timestamp，实际 {frame.columns[0]!r}")
    sensor_ids = [str(c) for c in frame.columns[1:]]
    if not sensor_ids:
        raise DataFormatError(str(path), "至少需要一个传感器列")

    raw_ts = frame["timestamp"]
    numeric = pd.to_numeric(raw_ts, errors="coerce")
    if not numeric.isna().any():
        # 纯数字时间戳按步序处理
        order_values = numeric.to_numpy(dtype=np.float64)
        inferred = interval_minutes or 5
    else:
        parsed = pd.to_datetime(raw_ts, errors="coerce")
        if parsed.isna().any():
            bad = int(np.flatnonzero(parsed.isna().to_numpy())[0])
            raise DataFormatError(str(path), f"第 {bad + 2} 行时间戳无法解析: {raw_ts.iloc[bad]!r}")
        order_values = parsed.to_numpy().astype("datetime64[ns]").astype(np.int64).astype(np.float64)
        inferred = interval_minutes or _infer_interval(parsed)
    if len(order_values) > 1 and not (np.diff(order_values) > 0).all():
        bad = int(np.flatnonzero(np.diff(order_values) <= 0)[0])
        raise DataFormatError(str(path), f"时间戳在第 {bad + 3} 行不再严格递增")

    try:
        values = frame[sensor_ids].apply(pd.to_numeric, errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise DataFormatError(str(path), f"传感器读数无法解析为数值: {e}")
    native_mask = (~np.isnan(values)).astype(np.float64)

    logger.debug(
        f"Loaded {path}: T={values.shape[0]}, N={values.shape[1]}, "
        f"native missing={int((native_mask == 0).sum())}"
    )
    return STDataset(
        values=values,
        native_mask=native_mask,
        sensor_ids=sensor_ids,
        interval_minutes=int(inferred),
        timestamps=[str(t) for t in raw_ts],
        name=path.stem,
    )


def _timestamp_column(dataset: STDataset) -> List[str]:
    if dataset.timestamps is not None:
        return list(dataset.timestamps)
    return [str(i) for i in range(dataset.num_steps)]


def save_matrix_csv(dataset: STDataset, path: Union[str, Path], values: Optional[np.ndarray] = None):
    """
    写出与输入同构的 CSV；NaN 写为空单元格

    values 给出时替换数据矩阵（例如插补结果），表头与时间戳沿用 dataset
    """
    matrix = dataset.values if values is None else np.asarray(values, dtype=np.float64)
    frame = pd.DataFrame(matrix, columns=dataset.sensor_ids)
    frame.insert(0, "timestamp", _timestamp_column(dataset))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep="")


def save_mask_csv(dataset: STDataset, mask: np.ndarray, path: Union[str, Path]):
    """整数矩阵（掩码、来源标记）按相同表头写出"""
    frame = pd.DataFrame(np.asarray(mask).astype(np.int64), columns=dataset.sensor_ids)
    frame.insert(0, "timestamp", _timestamp_column(dataset))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
