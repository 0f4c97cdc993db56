"""
有限差分梯度检查
用中心差分校验 tape 回放得到的解析梯度，并对整个模型做逐参数张量的检查
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ArgumentError
from .tensor import Tape, Tensor, backward

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
RELATIVE_FLOOR = 1e-4
KINK_TOLERANCE = 1e-3


@dataclass
class GradCheckReport:
    """单个张量的梯度检查结果"""

    max_rel_error: float
    tolerance: float
    checked: int
    excluded: List[Tuple[int, ...]] = field(default_factory=list)
    worst_index: Optional[Tuple[int, ...]] = None

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "checked": self.checked,
            "excluded": [list(i) for i in self.excluded],
            "worst_index": list(self.worst_index) if self.worst_index is not None else None,
            "passed": self.passed,
        }


@dataclass
class GradCheckSuite:
    """多个参数张量的检查汇总"""

    reports: Dict[str, GradCheckReport]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.reports.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "parameters": {name: r.to_dict() for name, r in self.reports.items()},
        }


def _scalar_value(f: Callable[[], Tensor]) -> float:
    out = f()
    if out.size != 1:
        raise ArgumentError("grad_check", "f", f"必须返回标量，实际形状 {out.shape}")
    return out.item()


def _check_tensor(
    f: Callable[[], Tensor],
    x: Tensor,
    analytic: np.ndarray,
    h: float,
    tol: float,
    f0: float,
) -> GradCheckReport:
    report = GradCheckReport(max_rel_error=0.0, tolerance=tol, checked=0)
    for idx in np.ndindex(*x.shape):
        original = x.data[idx]
        x.data[idx] = original + h
        f_plus = _scalar_value(f)
        x.data[idx] = original - h
        f_minus = _scalar_value(f)
        x.data[idx] = original

        forward_diff = (f_plus - f0) / h
        backward_diff = (f0 - f_minus) / h
        # 单侧差分明显不一致说明 h 邻域内有折点（如 relu 的 0 点）
        if abs(forward_diff - backward_diff) > KINK_TOLERANCE * max(1.0, abs(forward_diff), abs(backward_diff)):
            report.excluded.append(tuple(int(i) for i in idx))
            continue

        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), RELATIVE_FLOOR)
        report.checked += 1
        if rel > report.max_rel_error:
            report.max_rel_error = rel
            report.worst_index = tuple(int(i) for i in idx)
    return report


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
) -> GradCheckReport:
    """
    比较 f 在 x 处的解析梯度与中心差分

    f 必须是确定性的标量函数；返回最大相对误差以及因折点被排除的坐标
    """
    if h <= 0:
        raise ArgumentError("grad_check", "h", "必须为正数")
    x.requires_grad = True
    x.grad = None
    with Tape():
        y = f(x)
    if y.size != 1:
        raise ArgumentError("grad_check", "f", f"必须返回标量，实际形状 {y.shape}")
    backward(y)
    analytic = x.grad.copy()
    return _check_tensor(lambda: f(x), x, analytic, h, tol, y.item())


def grad_check_params(
    f: Callable[[], Tensor],
    params: Dict[str, Tensor],
    h: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
) -> GradCheckSuite:
    """对闭包 f 所依赖的每个参数张量分别做检查（一次反向传播得到全部解析梯度）"""
    for t in params.values():
        t.requires_grad = True
        t.grad = None
    with Tape():
        y = f()
    backward(y)
    f0 = y.item()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    reports = {name: _check_tensor(f, t, analytic[name], h, tol, f0) for name, t in params.items()}
    return GradCheckSuite(reports=reports, tolerance=tol)


def run_model_gradcheck(
    config=None,
    seed: int = 0,
    batch_size: int = 2,
    h: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
) -> GradCheckSuite:
    """
    整个插补网络的梯度检查：随机窗口 + 掩码 MSE 损失

    默认使用微型配置 (N=3, C=4, N_st=2)
    """
    from .model import ImputationNetwork, ModelConfig, masked_mse_loss

    config = config or ModelConfig.tiny()
    network = ImputationNetwork(config)
    params = network.init_params(seed)

    rng = np.random.Generator(np.random.PCG64(seed))
    shape = (batch_size, 1, config.num_nodes, config.window_length)
    m = (rng.random(shape) < 0.8).astype(np.float64)
    m[..., config.target_index] = 0.0
    x = rng.normal(size=shape) * m
    x_true = rng.normal(size=(batch_size, config.num_nodes))
    eval_mask = np.ones((batch_size, config.num_nodes))

    x_t, m_t = Tensor(x), Tensor(m)

    def loss_fn() -> Tensor:
        pred = network.forward(x_t, m_t, params)
        return masked_mse_loss(pred, x_true, eval_mask)

    return grad_check_params(loss_fn, dict(params.items()), h=h, tol=tol)
