"""
插补评估
对每个缺失率重新生成掩码（种子 = seed XOR 缺失率序号），
在测试段被人工隐藏的条目上以原始数据单位计算 MAE / MAPE / RMSE
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .baselines import BaselineKind, baseline_impute
from .dataset import STDataset, split_ranges
from .error_handler import FallbackManager
from .exceptions import (
    ConfigurationError,
    ConfigValidationError,
    MetricsInvariantError,
    NumericalError,
    is_recoverable,
)
from .hash_utils import array_digest, derive_seed
from .logger import logger
from .masking import MaskSpec, combined_visibility, generate_mask
from .metrics import INEQUALITY_SLACK, metrics
from .model import ImputationNetwork, ModelConfig, ModelParams
from .normalizer import Normalizer
from .windows import WindowReport, iter_batches, make_windows

DEFAULT_RATES = (0.2, 0.4, 0.6)
ROUND_TRIP_TOLERANCE = 1e-9

PROVENANCE_ORIGINAL = 0
PROVENANCE_IMPUTED = 1
PROVENANCE_FALLBACK = 2


@dataclass
class ImputationResult:
    """values: 完整矩阵；provenance: 0 原值，1 插补，2 线性插值回退"""

    values: np.ndarray
    provenance: np.ndarray


class BaselineImputer:
    def __init__(self, kind: Union[str, BaselineKind]):
        self.kind = BaselineKind(kind)
        self.name = self.kind.value

    def impute(
        self,
        dataset: STDataset,
        eval_mask: np.ndarray,
        target_range: Optional[Tuple[int, int]] = None,
    ) -> ImputationResult:
        visible = combined_visibility(dataset, eval_mask)
        values = baseline_impute(self.kind, dataset, visible)
        provenance = np.where(visible == 1, PROVENANCE_ORIGINAL, PROVENANCE_IMPUTED).astype(np.int64)
        return ImputationResult(values=values, provenance=provenance)


def check_normalization_round_trip(normalizer: Normalizer, values: np.ndarray, visible: np.ndarray):
    """denormalize(normalize(x)) 在可见条目上必须与 x 相差不超过 1e-9（相对量级）"""
    seen = visible == 1
    if not seen.any():
        return
    restored = normalizer.denormalize(normalizer.normalize(values))
    error = np.abs(restored[seen] - values[seen]) / np.maximum(1.0, np.abs(values[seen]))
    worst = float(error.max())
    if worst > ROUND_TRIP_TOLERANCE:
        raise MetricsInvariantError("normalization_round_trip", {"max_error": worst})


class ModelImputer:
    """
    用训练好的网络插补

    只对能构成完整窗口的时间步调用模型；其余不可见条目回退为线性插值，在来源矩阵中标记为 2。
    模型输出非有限值时抛出 NumericalError，不做回退
    """

    name = "model"

    def __init__(
        self,
        config: ModelConfig,
        params: ModelParams,
        normalizer: Normalizer,
        batch_size: int = 64,
        fallback_manager: Optional[FallbackManager] = None,
    ):
        self.config = config
        self.params = params
        self.normalizer = normalizer
        self.batch_size = batch_size
        self.network = ImputationNetwork(config)
        self.fallback_manager = fallback_manager or FallbackManager()

    def _predict(self, dataset: STDataset, eval_mask: np.ndarray, target_range) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (预测矩阵, 已预测标记)，未预测处为 NaN / 0"""
        report = WindowReport()
        samples = list(
            make_windows(
                dataset,
                eval_mask,
                self.normalizer,
                self.config,
                mode="inference",
                target_range=target_range,
                report=report,
            )
        )
        predicted = np.full(dataset.values.shape, np.nan)
        covered = np.zeros(dataset.values.shape, dtype=bool)
        offset = 0
        for batch in iter_batches(samples, self.batch_size):
            out = self.network.predict(batch.x, batch.m, self.params)
            if not np.isfinite(out).all():
                raise NumericalError(
                    f"模型在目标时间步 {samples[offset].target_index} 起的批次输出非有限值",
                    error_code="NON_FINITE_OUTPUT",
                    recovery_hint="checkpoint 参数或输入数据可能已损坏，重新训练或检查输入",
                )
            denorm = self.normalizer.denormalize(out)
            for row, sample in enumerate(samples[offset : offset + len(batch)]):
                nodes = sample.target_nodes == 1
                predicted[sample.target_index, nodes] = denorm[row, nodes]
                covered[sample.target_index, nodes] = True
            offset += len(batch)
        return predicted, covered

    def impute(
        self,
        dataset: STDataset,
        eval_mask: np.ndarray,
        target_range: Optional[Tuple[int, int]] = None,
    ) -> ImputationResult:
        if dataset.num_nodes != self.config.num_nodes:
            raise ConfigurationError(
                "num_nodes",
                f"模型为 {self.config.num_nodes} 个节点训练，数据有 {dataset.num_nodes} 个节点",
            )
        visible = combined_visibility(dataset, eval_mask)
        check_normalization_round_trip(self.normalizer, dataset.values, visible)

        predicted, covered = self._predict(dataset, eval_mask, target_range)

        interpolated = baseline_impute(BaselineKind.LINEAR_INTERPOLATION, dataset, visible)
        hidden = visible == 0
        fallback = hidden & ~covered
        values = np.where(covered, predicted, interpolated)
        values = np.where(visible == 1, dataset.values, values)

        provenance = np.full(dataset.values.shape, PROVENANCE_ORIGINAL, dtype=np.int64)
        provenance[hidden & covered] = PROVENANCE_IMPUTED
        provenance[fallback] = PROVENANCE_FALLBACK

        lo, hi = target_range if target_range is not None else (0, dataset.num_steps)
        self.fallback_manager.record_fallback("model_imputation", int(fallback[lo:hi].sum()))
        return ImputationResult(values=values, provenance=provenance)


def _baseline_factory(kind: BaselineKind) -> Callable[[], BaselineImputer]:
    return lambda: BaselineImputer(kind)


# 方法名 → 无参工厂；模型需要 checkpoint，由调用方单独构造
IMPUTER_FACTORIES: Dict[str, Callable[[], Any]] = {
    kind.value: _baseline_factory(kind) for kind in BaselineKind
}


def build_imputers(names: Sequence[str]) -> List[Any]:
    imputers = []
    for name in names:
        key = name.strip().lower()
        if key not in IMPUTER_FACTORIES:
            raise ConfigValidationError(
                "evaluation.baselines", name, f"可选值: {', '.join(sorted(IMPUTER_FACTORIES))}"
            )
        imputers.append(IMPUTER_FACTORIES[key]())
    return imputers


@dataclass
class MetricsEntry:
    dataset: str
    missing_rate: float
    method: str
    mae: float
    mape: Optional[float]
    rmse: float
    n_eval: int


@dataclass
class MetricsReport:
    entries: List[MetricsEntry] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.check_invariants()

    def check_invariants(self):
        for e in self.entries:
            if e.n_eval <= 0 or e.mae < 0 or e.rmse < e.mae - INEQUALITY_SLACK * max(1.0, e.mae):
                raise MetricsInvariantError("rmse_ge_mae_ge_0", asdict(e))

    def methods(self) -> List[str]:
        seen: List[str] = []
        for e in self.entries:
            if e.method not in seen:
                seen.append(e.method)
        return seen

    def rates(self) -> List[float]:
        return sorted({e.missing_rate for e in self.entries})

    def get(self, method: str, rate: float) -> Optional[MetricsEntry]:
        for e in self.entries:
            if e.method == method and abs(e.missing_rate - rate) < 1e-12:
                return e
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {"metadata": self.metadata, "results": [asdict(e) for e in self.entries]}

    def write_json(self, path: Union[str, Path]):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    def render_table(self) -> str:
        """行：方法；列：缺失率 × (MAE, MAPE, RMSE)"""
        rates = self.rates()
        methods = self.methods()
        name_width = max([len("Method")] + [len(m) for m in methods])
        cell = 9

        def fmt(value: Optional[float]) -> str:
            return "n/a".rjust(cell) if value is None else f"{value:{cell}.4f}"

        group_width = 3 * cell + 2
        top = " " * name_width + " | " + " | ".join(f"{r:.0%}".center(group_width) for r in rates)
        sub = "Method".ljust(name_width) + " | " + " | ".join(
            " ".join(h.rjust(cell) for h in ("MAE", "MAPE", "RMSE")) for _ in rates
        )
        lines = [top, sub, "-" * len(sub)]
        for method in methods:
            groups = []
            for rate in rates:
                e = self.get(method, rate)
                if e is None:
                    groups.append(" ".join(fmt(None) for _ in range(3)))
                else:
                    groups.append(" ".join((fmt(e.mae), fmt(e.mape), fmt(e.rmse))))
            lines.append(method.ljust(name_width) + " | " + " | ".join(groups))
        return "\n".join(lines)


def _evaluate_one(imputer, dataset: STDataset, mask: np.ndarray, rate: float, test_range) -> Optional[MetricsEntry]:
    lo, hi = test_range
    result = imputer.impute(dataset, mask, target_range=test_range)
    test_mask = np.zeros_like(mask)
    test_mask[lo:hi] = mask[lo:hi]
    try:
        m = metrics(dataset.values, result.values, test_mask, context=f"{imputer.name}@{rate:g}")
    except Exception as e:
        if is_recoverable(e):
            logger.warning(f"Skipping {imputer.name} at rate {rate:g}: {e}")
            return None
        raise
    logger.log_metrics(dataset.name, rate, imputer.name, m.mae, m.mape, m.rmse, m.n_eval)
    return MetricsEntry(
        dataset=dataset.name,
        missing_rate=rate,
        method=imputer.name,
        mae=m.mae,
        mape=m.mape,
        rmse=m.rmse,
        n_eval=m.n_eval,
    )


def evaluate(
    imputers: Sequence[Any],
    dataset: STDataset,
    missing_rates: Sequence[float] = DEFAULT_RATES,
    seed: int = 0,
    workers: int = 1,
    metadata: Optional[Dict[str, Any]] = None,
) -> MetricsReport:
    """
    imputers 需提供 name 属性和 impute(dataset, eval_mask, target_range) 方法

    (缺失率, 方法) 组合之间相互独立，workers > 1 时并行执行；结果顺序固定为方法优先、缺失率次之
    """
    test_range = split_ranges(dataset.num_steps)["test"]
    masks = {}
    derived_seeds = {}
    for index, rate in enumerate(missing_rates):
        rate_seed = derive_seed(seed, index)
        derived_seeds[f"{rate:g}"] = rate_seed
        masks[index] = generate_mask(dataset, MaskSpec(missing_rate=rate, seed=rate_seed))

    jobs = [
        (imputer, index, rate)
        for imputer in imputers
        for index, rate in enumerate(missing_rates)
    ]

    def run(job):
        imputer, index, rate = job
        return _evaluate_one(imputer, dataset, masks[index], rate, test_range)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    meta = {
        "dataset": dataset.name,
        "seed": seed,
        "missing_rates": list(missing_rates),
        "derived_seeds": derived_seeds,
        "test_range": list(test_range),
        "data_digest": array_digest(dataset.values),
    }
    meta.update(metadata or {})
    return MetricsReport(entries=[r for r in results if r is not None], metadata=meta)
