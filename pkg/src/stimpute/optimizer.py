"""Adam 优化器与全局梯度范数裁剪"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .exceptions import DimensionError
from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """每个参数张量的一阶矩 m、二阶矩 v 以及共享的步数"""

    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPSILON
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, name: str, shape):
        if name not in self.m:
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState, lr: float):
    """
    带偏差修正的 Adam 原地更新

    θ ← θ − lr · m̂ / (√v̂ + ε)，m̂ = m / (1 − β1^t)，v̂ = v / (1 − β2^t)
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise DimensionError(f"adam_step[{name}]", param.shape, grad.shape)
        state.ensure(name, param.shape)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def global_grad_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """按全局 L2 范数等比缩放（原地），返回裁剪前的范数"""
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
