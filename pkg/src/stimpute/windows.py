"""
窗口样本构造
每个目标时间步 t 取 [t−T_p, t+T_f] 的观测，隐藏条目（原始缺失或人工隐藏）在归一化后置 0，
可见性作为第二个输入通道，目标时间步整列不可见
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import STDataset
from .exceptions import ConfigurationError
from .logger import logger
from .masking import combined_visibility
from .normalizer import Normalizer

WINDOW_MODES = ("train", "inference")


@dataclass
class WindowSample:
    """
    x_window / m_window: [1×N×T_w]
    x_true_t / eval_mask_t: [N]，真值为归一化单位，只在 eval_mask_t=1 处有意义
    target_nodes: 需要由模型输出的节点（训练时等于 eval_mask_t，推理时为所有不可见节点）
    """

    x_window: np.ndarray
    m_window: np.ndarray
    target_index: int
    x_true_t: np.ndarray
    eval_mask_t: np.ndarray
    target_nodes: np.ndarray


@dataclass
class WindowReport:
    emitted: int = 0
    skipped: int = 0
    skipped_targets: List[int] = field(default_factory=list)


@dataclass
class WindowBatch:
    x: np.ndarray
    m: np.ndarray
    x_true: np.ndarray
    eval_mask: np.ndarray
    target_indices: np.ndarray

    @classmethod
    def from_samples(cls, samples: Sequence[WindowSample]) -> "WindowBatch":
        return cls(
            x=np.stack([s.x_window for s in samples]),
            m=np.stack([s.m_window for s in samples]),
            x_true=np.stack([s.x_true_t for s in samples]),
            eval_mask=np.stack([s.eval_mask_t for s in samples]),
            target_indices=np.array([s.target_index for s in samples], dtype=np.int64),
        )

    def __len__(self) -> int:
        return self.x.shape[0]


def iter_batches(
    samples: Sequence[WindowSample],
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[WindowBatch]:
    """按 batch_size 切分；给出 rng 时先打乱顺序"""
    order = np.arange(len(samples))
    if rng is not None:
        order = rng.permutation(len(samples))
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        yield WindowBatch.from_samples([samples[i] for i in chunk])


def model_inputs(dataset: STDataset, visible: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    """
    归一化后的输入矩阵 [T×N]，不可见处为 0

    用 np.where 选择而不是乘以掩码，隐藏位置上的任何值（包括 NaN、inf）都不会进入模型输入
    """
    with np.errstate(invalid="ignore", over="ignore"):
        normalized = normalizer.normalize(dataset.values)
    return np.where(visible == 1, normalized, 0.0)


def make_windows(
    dataset: STDataset,
    eval_mask: np.ndarray,
    normalizer: Normalizer,
    config,
    mode: str = "train",
    target_range: Optional[Tuple[int, int]] = None,
    report: Optional[WindowReport] = None,
) -> Iterator[WindowSample]:
    """
    逐个产出窗口样本

    mode="train": 只为含人工隐藏条目的时间步产出样本
    mode="inference": 为任何含不可见条目的时间步产出样本
    target_range 限定目标时间步（默认整个数据集）；窗口越界的目标被跳过并计入 report
    """
    if mode not in WINDOW_MODES:
        raise ConfigurationError("window_mode", f"未知模式 {mode!r}，可选 {WINDOW_MODES}")
    if dataset.num_nodes != config.num_nodes:
        raise ConfigurationError(
            "num_nodes", f"数据集有 {dataset.num_nodes} 个传感器，模型配置为 {config.num_nodes}"
        )
    if eval_mask.shape != dataset.values.shape:
        raise ConfigurationError("mask_shape", f"eval_mask 形状 {eval_mask.shape} 与数据 {dataset.values.shape} 不一致")

    report = report if report is not None else WindowReport()
    past, future = config.past_steps, config.future_steps
    num_steps = dataset.num_steps
    lo, hi = target_range if target_range is not None else (0, num_steps)

    visible = combined_visibility(dataset, eval_mask)
    inputs = model_inputs(dataset, visible, normalizer)
    truth = np.where(eval_mask == 1, normalized_truth(dataset, normalizer), 0.0)
    wanted = (eval_mask == 1) if mode == "train" else (visible == 0)

    for t in range(max(lo, 0), min(hi, num_steps)):
        if not wanted[t].any():
            continue
        if t < past or t + future >= num_steps:
            report.skipped += 1
            report.skipped_targets.append(t)
            continue

        x_win = inputs[t - past : t + future + 1].T.copy()
        m_win = visible[t - past : t + future + 1].T.copy()
        m_win[:, past] = 0.0
        x_win[:, past] = 0.0
        report.emitted += 1
        yield WindowSample(
            x_window=x_win[None, :, :],
            m_window=m_win[None, :, :],
            target_index=t,
            x_true_t=truth[t].copy(),
            eval_mask_t=eval_mask[t].astype(np.float64).copy(),
            target_nodes=wanted[t].astype(np.float64),
        )

    if report.skipped:
        logger.log_windows_skipped(report.skipped, f"{dataset.name}[{lo}:{hi}] mode={mode}")


def normalized_truth(dataset: STDataset, normalizer: Normalizer) -> np.ndarray:
    """归一化真值，原始缺失处为 0"""
    with np.errstate(invalid="ignore", over="ignore"):
        normalized = normalizer.normalize(dataset.values)
    return np.where(dataset.native_mask == 1, normalized, 0.0)
