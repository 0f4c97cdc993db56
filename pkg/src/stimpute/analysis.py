"""
补充分析
- 训练数据比例敏感性：只用训练段前面一部分训练，在同一测试段和掩码上比较
- 可解释性导出：每个 ST-block 的平均注意力矩阵、节点嵌入的余弦相似度
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .baselines import BaselineKind
from .dataset import STDataset
from .evaluation import BaselineImputer, ModelImputer, evaluate
from .exceptions import EmptyEvaluationSetError
from .logger import logger
from .masking import MaskSpec, generate_mask
from .model import ForwardTrace, ImputationNetwork, ModelConfig, ModelParams
from .tensor import Tensor
from .trainer import TrainConfig, prepare_training_data, train
from .windows import WindowSample, iter_batches

DEFAULT_FRACTIONS = (0.5, 0.8, 1.0)


@dataclass
class SensitivityRow:
    fraction: float
    train_windows: int
    epochs: int
    best_val_loss: Optional[float]
    mae: float
    mape: Optional[float]
    rmse: float
    n_eval: int


@dataclass
class SensitivityReport:
    rows: List[SensitivityRow] = field(default_factory=list)
    baseline: Optional[Dict[str, Any]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metadata": self.metadata,
            "baseline": self.baseline,
            "results": [asdict(r) for r in self.rows],
        }

    def write_json(self, path: Union[str, Path]):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    def render_table(self) -> str:
        header = f"{'fraction':>8} {'windows':>8} {'epochs':>6} {'MAE':>9} {'MAPE':>9} {'RMSE':>9}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            mape = "n/a" if r.mape is None else f"{r.mape:.4f}"
            lines.append(
                f"{r.fraction:>8.2f} {r.train_windows:>8d} {r.epochs:>6d} {r.mae:>9.4f} {mape:>9} {r.rmse:>9.4f}"
            )
        if self.baseline is not None:
            b = self.baseline
            mape = "n/a" if b["mape"] is None else f"{b['mape']:.4f}"
            lines.append(f"{'linear':>8} {'-':>8} {'-':>6} {b['mae']:>9.4f} {mape:>9} {b['rmse']:>9.4f}")
        return "\n".join(lines)


def run_data_fraction_sensitivity(
    dataset: STDataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    missing_rate: float = 0.2,
    seed: int = 0,
) -> SensitivityReport:
    """
    每个比例从同一初始化开始训练；掩码和测试段对所有比例相同

    评估时缺失率序号为 0，派生种子等于 seed，与训练掩码一致
    """
    mask = generate_mask(dataset, MaskSpec(missing_rate=missing_rate, seed=seed))
    network = ImputationNetwork(model_config)
    report = SensitivityReport(
        metadata={
            "dataset": dataset.name,
            "missing_rate": missing_rate,
            "seed": seed,
            "fractions": list(fractions),
            "model_config": model_config.to_dict(),
            "train_config": train_config.to_dict(),
        }
    )

    baseline = evaluate([BaselineImputer(BaselineKind.LINEAR_INTERPOLATION)], dataset, [missing_rate], seed)
    if not baseline.entries:
        raise EmptyEvaluationSetError(f"linear_interpolation@{missing_rate:g}")
    e = baseline.entries[0]
    report.baseline = {"method": e.method, "mae": e.mae, "mape": e.mape, "rmse": e.rmse, "n_eval": e.n_eval}

    for fraction in fractions:
        logger.info(f"Training with {fraction:.0%} of the training split")
        data = prepare_training_data(dataset, mask, model_config, data_fraction=fraction)
        params = network.init_params(train_config.seed)
        trained = train(network, params, data, train_config)
        imputer = ModelImputer(model_config, trained.params, trained.normalizer)
        result = evaluate([imputer], dataset, [missing_rate], seed)
        if not result.entries:
            raise EmptyEvaluationSetError(f"model@{missing_rate:g} fraction={fraction:g}")
        entry = result.entries[0]
        best_val = None
        if trained.history.best_epoch is not None:
            best_val = trained.history.epochs[trained.history.best_epoch - 1].val_loss
        report.rows.append(
            SensitivityRow(
                fraction=fraction,
                train_windows=len(data.train_samples),
                epochs=len(trained.history.epochs),
                best_val_loss=best_val,
                mae=entry.mae,
                mape=entry.mape,
                rmse=entry.rmse,
                n_eval=entry.n_eval,
            )
        )
    return report


def inspect_attention(
    network: ImputationNetwork,
    params: ModelParams,
    samples: Sequence[WindowSample],
    batch_size: int = 64,
) -> List[np.ndarray]:
    """每个 ST-block 的注意力矩阵 [N×N]，对样本和时间步取平均；每行之和为 1"""
    sums: List[np.ndarray] = []
    count = 0
    for batch in iter_batches(samples, batch_size):
        trace = ForwardTrace()
        network.forward(Tensor(batch.x), Tensor(batch.m), params, trace=trace)
        for layer, block in enumerate(trace.blocks):
            # alpha: [B×T×N×N]
            contribution = block.alpha.reshape(-1, block.alpha.shape[-2], block.alpha.shape[-1])
            if len(sums) <= layer:
                sums.append(np.zeros(contribution.shape[1:]))
            sums[layer] += contribution.mean(axis=0) * len(batch)
        count += len(batch)
    if count == 0:
        return []
    return [s / count for s in sums]


def embedding_similarity(params: ModelParams) -> np.ndarray:
    """节点嵌入两两余弦相似度；零向量与任何节点的相似度记为 0"""
    e = params["node_embeddings"].data
    norms = np.linalg.norm(e, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = e / safe[:, None]
    sim = unit @ unit.T
    zero = norms == 0
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    return sim


def write_node_matrix(matrix: np.ndarray, sensor_ids: Sequence[str], path: Union[str, Path]):
    frame = pd.DataFrame(matrix, index=list(sensor_ids), columns=list(sensor_ids))
    frame.index.name = "sensor_id"
    frame.to_csv(path)
