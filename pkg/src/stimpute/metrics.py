"""MAE / MAPE / RMSE，只在评估掩码覆盖的条目上计算"""

from typing import NamedTuple, Optional

import numpy as np

from .exceptions import EmptyEvaluationSetError, MetricsInvariantError

MAPE_EPSILON = 1e-3
# 浮点求和误差允许的 RMSE < MAE 幅度
INEQUALITY_SLACK = 1e-12


class Metrics(NamedTuple):
    mae: float
    mape: Optional[float]
    rmse: float
    n_eval: int


def metrics(x_true: np.ndarray, x_hat: np.ndarray, eval_mask: np.ndarray, context: str = "metrics") -> Metrics:
    """
    MAE = mean|Δ|，RMSE = sqrt(mean Δ²)，
    MAPE = mean(|Δ| / |x_true|)，只统计 |x_true| > 1e-3 的条目；没有这样的条目时为 None
    """
    x_true = np.asarray(x_true, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    selected = np.asarray(eval_mask) == 1
    if x_true.shape != x_hat.shape or x_true.shape != selected.shape:
        raise MetricsInvariantError(
            "shape", {"x_true": x_true.shape, "x_hat": x_hat.shape, "eval_mask": selected.shape}
        )
    n_eval = int(selected.sum())
    if n_eval == 0:
        raise EmptyEvaluationSetError(context)

    truth = x_true[selected]
    delta = np.abs(x_hat[selected] - truth)
    mae = float(delta.mean())
    rmse = float(np.sqrt((delta * delta).mean()))

    guarded = np.abs(truth) > MAPE_EPSILON
    mape = float((delta[guarded] / np.abs(truth[guarded])).mean()) if guarded.any() else None

    if not np.isfinite(mae) or not np.isfinite(rmse):
        raise MetricsInvariantError("finite", {"mae": mae, "rmse": rmse})
    if rmse < mae - INEQUALITY_SLACK * max(1.0, mae):
        raise MetricsInvariantError("rmse_ge_mae", {"mae": mae, "rmse": rmse})
    return Metrics(mae=mae, mape=mape, rmse=rmse, n_eval=n_eval)
