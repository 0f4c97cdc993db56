"""
训练引擎
按批最小化掩码 MSE：清零梯度 → 前向 → 反向 → 全局范数裁剪 → Adam；
每个 epoch 结束后在验证集上计算损失，早停并恢复验证损失最低的参数
"""

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .dataset import STDataset, split_ranges
from .exceptions import ConfigurationError, ConfigValidationError, NumericalAbortError
from .logger import logger
from .masking import combined_visibility
from .model import ImputationNetwork, ModelConfig, ModelParams, masked_mse_loss
from .normalizer import Normalizer, fit_normalizer
from .optimizer import AdamState, adam_step, clip_grad_norm
from .tensor import Tape, Tensor, backward
from .windows import WindowSample, iter_batches, make_windows


def _is_integer(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    grad_clip_norm: float = 5.0
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        # learning_rate = 0 合法：冻结参数，用于检查流水线
        if not _is_number(self.learning_rate) or not self.learning_rate >= 0:
            raise ConfigValidationError("train.learning_rate", self.learning_rate, "必须为非负数")
        for key in ("batch_size", "max_epochs", "patience"):
            value = getattr(self, key)
            if not _is_integer(value) or value <= 0:
                raise ConfigValidationError(f"train.{key}", value, "必须为正整数")
        if not _is_number(self.grad_clip_norm) or not self.grad_clip_norm > 0:
            raise ConfigValidationError("train.grad_clip_norm", self.grad_clip_norm, "必须为正数")
        if not _is_integer(self.seed) or self.seed < 0:
            raise ConfigValidationError("train.seed", self.seed, "必须为非负整数")
        if self.max_steps is not None and (not _is_integer(self.max_steps) or self.max_steps <= 0):
            raise ConfigValidationError("train.max_steps", self.max_steps, "必须为正整数或 null")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    seconds: float


@dataclass
class TrainingHistory:
    epochs: List[EpochRecord] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    @property
    def steps(self) -> int:
        return len(self.step_losses)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [asdict(r) for r in self.epochs], columns=["epoch", "train_loss", "val_loss", "seconds"]
        )

    def to_csv(self, path: Union[str, Path]):
        """epoch,train_loss,val_loss,seconds"""
        self.to_frame().to_csv(path, index=False, na_rep="")


@dataclass
class TrainingData:
    """一次训练所需的窗口、归一化器与切分信息"""

    dataset: STDataset
    eval_mask: np.ndarray
    normalizer: Normalizer
    train_samples: List[WindowSample]
    val_samples: List[WindowSample]
    ranges: Dict[str, tuple]
    data_fraction: float = 1.0


@dataclass
class TrainedModel:
    config: ModelConfig
    params: ModelParams
    normalizer: Normalizer
    history: TrainingHistory
    train_config: TrainConfig

    @property
    def network(self) -> ImputationNetwork:
        return ImputationNetwork(self.config)


def prepare_training_data(
    dataset: STDataset,
    eval_mask: np.ndarray,
    model_config: ModelConfig,
    data_fraction: float = 1.0,
) -> TrainingData:
    """
    按 70/10/20 切分时间轴，在训练段可见条目上拟合归一化器并构造窗口

    训练窗口完全位于训练段（取前 data_fraction 部分）之内；
    验证窗口的目标位于验证段，可以使用训练段作为过去上下文
    """
    if not 0.0 < data_fraction <= 1.0:
        raise ConfigValidationError("data.fraction", data_fraction, "必须位于 (0, 1]")
    if dataset.num_steps < model_config.window_length:
        raise ConfigurationError(
            "window_length",
            f"数据只有 {dataset.num_steps} 个时间步，少于窗口长度 T_p + T_f + 1 = {model_config.window_length}",
        )

    ranges = split_ranges(dataset.num_steps)
    train_lo, train_hi = ranges["train"]
    train_hi = train_lo + int(round((train_hi - train_lo) * data_fraction))
    if train_hi - train_lo < model_config.window_length:
        raise ConfigurationError(
            "window_length", f"训练段只有 {train_hi - train_lo} 个时间步，不足一个窗口"
        )

    visible = combined_visibility(dataset, eval_mask)
    normalizer = fit_normalizer(dataset, (train_lo, train_hi), visible)

    train_samples = list(
        make_windows(
            dataset.slice_time(train_lo, train_hi),
            eval_mask[train_lo:train_hi],
            normalizer,
            model_config,
            mode="train",
        )
    )
    val_lo, val_hi = ranges["val"]
    val_samples = list(
        make_windows(
            dataset.slice_time(0, val_hi),
            eval_mask[:val_hi],
            normalizer,
            model_config,
            mode="train",
            target_range=(val_lo, val_hi),
        )
    )
    if not train_samples:
        raise ConfigurationError("training_windows", "训练段没有任何人工隐藏的条目，无法训练（检查缺失率）")

    logger.info(
        f"Prepared {len(train_samples)} training / {len(val_samples)} validation windows "
        f"(train steps {train_lo}-{train_hi}, fraction {data_fraction:g})"
    )
    return TrainingData(
        dataset=dataset,
        eval_mask=eval_mask,
        normalizer=normalizer,
        train_samples=train_samples,
        val_samples=val_samples,
        ranges={**ranges, "train_used": (train_lo, train_hi)},
        data_fraction=data_fraction,
    )


def batch_loss(network: ImputationNetwork, params: ModelParams, batch) -> Tensor:
    pred = network.forward(Tensor(batch.x), Tensor(batch.m), params)
    return masked_mse_loss(pred, batch.x_true, batch.eval_mask)


def evaluate_loss(
    network: ImputationNetwork,
    params: ModelParams,
    samples: Sequence[WindowSample],
    batch_size: int,
) -> Optional[float]:
    """所有样本掩码条目上的平均平方误差（不记录 tape）"""
    total, count = 0.0, 0.0
    for batch in iter_batches(samples, batch_size):
        n = float(batch.eval_mask.sum())
        if n == 0:
            continue
        total += batch_loss(network, params, batch).item() * n
        count += n
    return total / count if count else None


def train(
    network: ImputationNetwork,
    params: ModelParams,
    data: TrainingData,
    train_config: TrainConfig,
) -> TrainedModel:
    """
    训练到 max_epochs、max_steps 或早停为止

    返回时 params 已恢复为验证损失最低（无验证集时为训练损失最低）的那一轮
    """
    cfg = train_config
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = AdamState()
    history = TrainingHistory()

    best_loss = math.inf
    best_state = params.state_arrays()
    epochs_since_best = 0
    steps = 0

    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        weighted, count = 0.0, 0.0
        for batch_id, batch in enumerate(iter_batches(data.train_samples, cfg.batch_size, rng)):
            params.zero_grad()
            with Tape():
                loss = batch_loss(network, params, batch)
            value = loss.item()
            if not math.isfinite(value):
                logger.log_training_abort(epoch, batch_id, cfg.learning_rate, value)
                raise NumericalAbortError(cfg.learning_rate, epoch, batch_id, value)
            backward(loss)
            grads = params.grads()
            clip_grad_norm(grads, cfg.grad_clip_norm)
            adam_step(dict(params.items()), grads, state, cfg.learning_rate)

            n = float(batch.eval_mask.sum())
            weighted += value * n
            count += n
            history.step_losses.append(value)
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break

        train_loss = weighted / count if count else 0.0
        val_loss = evaluate_loss(network, params, data.val_samples, cfg.batch_size)
        seconds = time.perf_counter() - started
        history.epochs.append(EpochRecord(epoch, train_loss, val_loss, seconds))
        logger.log_epoch(epoch, train_loss, val_loss, seconds, steps)

        monitored = val_loss if val_loss is not None else train_loss
        if monitored < best_loss:
            best_loss = monitored
            best_state = params.state_arrays()
            history.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1

        if epochs_since_best >= cfg.patience:
            history.stopped_early = True
            logger.info(f"Early stopping after epoch {epoch} (best epoch {history.best_epoch})")
            break
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break

    params.load_arrays(best_state)
    if not params.is_finite():
        raise NumericalAbortError(cfg.learning_rate, history.best_epoch or 0, -1, float("nan"))
    return TrainedModel(
        config=network.config,
        params=params,
        normalizer=data.normalizer,
        history=history,
        train_config=cfg,
    )
