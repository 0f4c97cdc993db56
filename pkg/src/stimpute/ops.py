"""
模型所需的全部可微运算

约定：三维张量按 [C×N×T]（通道×节点×时间）排列，四维张量在前面多一个批次维 [B×C×N×T]。
时间卷积一律使用 valid padding。
"""

import math
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import ArgumentError, DimensionError
from .tensor import Function, Tensor, as_tensor

ELEMENTWISE_KINDS = ("tanh", "sigmoid", "relu", "add", "mul")


def _channel_axis(ndim: int) -> int:
    # [C], [C×N], [C×N×T] 的通道在第 0 维；[B×C×N×T] 在第 1 维
    return 1 if ndim == 4 else 0


def _require_feature_map(op: str, x: np.ndarray):
    if x.ndim not in (3, 4):
        raise DimensionError(op, "[C×N×T] or [B×C×N×T]", x.shape)


# =============================================================================
# 卷积
# =============================================================================


class Conv1dDilated(Function):
    def forward(self, x: np.ndarray, w: np.ndarray, dilation: int = 1) -> np.ndarray:
        _require_feature_map("conv1d_dilated", x)
        if w.ndim != 3:
            raise DimensionError("conv1d_dilated", "weight [C_out×C_in×k]", w.shape)
        if w.shape[1] != x.shape[-3]:
            raise DimensionError("conv1d_dilated", f"C_in={w.shape[1]}", x.shape)
        if isinstance(dilation, bool) or not isinstance(dilation, (int, np.integer)) or dilation <= 0:
            raise ArgumentError("conv1d_dilated", "dilation", f"必须为正整数，实际 {dilation}")
        k = w.shape[2]
        t_in = x.shape[-1]
        t_out = t_in - (k - 1) * dilation
        if t_out <= 0:
            raise DimensionError("conv1d_dilated", f"T > {(k - 1) * dilation}", x.shape)

        self.dilation = int(dilation)
        self.t_out = t_out
        self.x = x
        self.w = w
        out = None
        for j in range(k):
            start = j * self.dilation
            term = np.einsum("oc,...cnt->...ont", w[:, :, j], x[..., start : start + t_out], optimize=True)
            out = term if out is None else out + term
        return out

    def backward(self, grad: np.ndarray):
        x, w = self.x, self.w
        dx = np.zeros_like(x)
        dw = np.zeros_like(w)
        for j in range(w.shape[2]):
            start = j * self.dilation
            xj = x[..., start : start + self.t_out]
            dw[:, :, j] = np.einsum("...ont,...cnt->oc", grad, xj, optimize=True)
            dx[..., start : start + self.t_out] += np.einsum("oc,...ont->...cnt", w[:, :, j], grad, optimize=True)
        return dx, dw


class Conv1x1(Function):
    def forward(self, x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
        _require_feature_map("conv1x1", x)
        if w.ndim != 2 or w.shape[1] != x.shape[-3]:
            raise DimensionError("conv1x1", f"weight [C_out×{x.shape[-3]}]", w.shape)
        if b is not None and b.shape != (w.shape[0],):
            raise DimensionError("conv1x1", f"bias [{w.shape[0]}]", b.shape)
        self.x = x
        self.w = w
        out = np.einsum("oc,...cnt->...ont", w, x, optimize=True)
        if b is not None:
            out = out + b[:, None, None]
        return out

    def backward(self, grad: np.ndarray):
        dx = np.einsum("oc,...ont->...cnt", self.w, grad, optimize=True)
        dw = np.einsum("...ont,...cnt->oc", grad, self.x, optimize=True)
        if len(self.inputs) == 3:
            reduce_axes = tuple(i for i in range(grad.ndim) if i != grad.ndim - 3)
            return dx, dw, grad.sum(axis=reduce_axes)
        return dx, dw


def conv1d_dilated(input: Tensor, weight: Tensor, dilation: int = 1) -> Tensor:
    """
    沿时间轴的膨胀卷积，每个节点独立计算

    out[c,n,t] = Σ_{c',j} weight[c,c',j] · input[c',n,t+j·dilation]
    输出时间长度 T − (k−1)·dilation
    """
    return Conv1dDilated.apply(input, weight, dilation=dilation)


def conv1x1(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """逐位置的通道线性映射（k=1 的卷积），可选通道偏置"""
    if bias is None:
        return Conv1x1.apply(input, weight)
    return Conv1x1.apply(input, weight, bias)


# =============================================================================
# 逐元素运算
# =============================================================================


class Tanh(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.y = np.tanh(a)
        return self.y

    def backward(self, grad: np.ndarray):
        return (grad * (1.0 - self.y * self.y),)


class Sigmoid(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        # tanh 形式避免 exp 溢出
        self.y = 0.5 * (1.0 + np.tanh(0.5 * a))
        return self.y

    def backward(self, grad: np.ndarray):
        return (grad * self.y * (1.0 - self.y),)


class ReLU(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.positive = a > 0
        return np.where(self.positive, a, 0.0)

    def backward(self, grad: np.ndarray):
        # x == 0 处取次梯度 0
        return (grad * self.positive,)


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape != b.shape:
            raise DimensionError("add", a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray):
        return grad, grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape != b.shape:
            raise DimensionError("mul", a.shape, b.shape)
        self.a = a
        self.b = b
        return a * b

    def backward(self, grad: np.ndarray):
        return grad * self.b, grad * self.a


_UNARY = {"tanh": Tanh, "sigmoid": Sigmoid, "relu": ReLU}
_BINARY = {"add": Add, "mul": Mul}


def elementwise(op_kind: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """逐元素运算: tanh / sigmoid / relu / add / mul；二元运算要求形状完全一致"""
    if op_kind in _UNARY:
        return _UNARY[op_kind].apply(a)
    if op_kind in _BINARY:
        if b is None:
            raise ArgumentError("elementwise", "b", f"{op_kind} 需要两个操作数")
        return _BINARY[op_kind].apply(a, b)
    raise ArgumentError("elementwise", "op_kind", f"未知运算 {op_kind!r}，可选 {ELEMENTWISE_KINDS}")


def tanh(a: Tensor) -> Tensor:
    return Tanh.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


def relu(a: Tensor) -> Tensor:
    return ReLU.apply(a)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


# =============================================================================
# 形状类运算
# =============================================================================


class ConcatChannels(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        axis = _channel_axis(a.ndim)
        other_a = a.shape[:axis] + a.shape[axis + 1 :]
        other_b = b.shape[:axis] + b.shape[axis + 1 :]
        if a.ndim != b.ndim or other_a != other_b:
            raise DimensionError("concat_channels", a.shape, b.shape)
        self.axis = axis
        self.split = a.shape[axis]
        return np.concatenate([a, b], axis=axis)

    def backward(self, grad: np.ndarray):
        ga, gb = np.split(grad, [self.split], axis=self.axis)
        return ga, gb


class CropTime(Function):
    def forward(self, x: np.ndarray, length: int = 1) -> np.ndarray:
        if length <= 0 or length > x.shape[-1]:
            raise ArgumentError("crop_time", "length", f"{length} 不在 [1, {x.shape[-1]}] 内")
        self.in_shape = x.shape
        self.length = length
        return x[..., x.shape[-1] - length :]

    def backward(self, grad: np.ndarray):
        dx = np.zeros(self.in_shape)
        dx[..., self.in_shape[-1] - self.length :] = grad
        return (dx,)


class ExpandEmbeddings(Function):
    def forward(self, e: np.ndarray, lead_shape: Tuple[int, ...] = (), steps: int = 1) -> np.ndarray:
        if e.ndim != 2:
            raise DimensionError("expand_embeddings", "[N×D]", e.shape)
        # [N×D] -> [...×D×N×T]
        self.lead_ndim = len(lead_shape)
        base = e.T[:, :, None]
        return np.broadcast_to(base, tuple(lead_shape) + (e.shape[1], e.shape[0], steps)).copy()

    def backward(self, grad: np.ndarray):
        reduced = grad.sum(axis=tuple(range(self.lead_ndim))) if self.lead_ndim else grad
        return (reduced.sum(axis=-1).T,)


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Sequence[int] = ()) -> np.ndarray:
        self.in_shape = x.shape
        try:
            return x.reshape(tuple(shape))
        except ValueError:
            raise DimensionError("reshape", tuple(shape), x.shape)

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.in_shape),)


class Sum(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.in_shape = x.shape
        return np.asarray(x.sum())

    def backward(self, grad: np.ndarray):
        return (np.full(self.in_shape, float(grad)),)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """通道维拼接；其余维度必须一致"""
    return ConcatChannels.apply(a, b)


def crop_time(x: Tensor, length: int) -> Tensor:
    """保留最后 length 个时间步"""
    return CropTime.apply(x, length=length)


def expand_embeddings(embeddings: Tensor, lead_shape: Tuple[int, ...], steps: int) -> Tensor:
    """把节点嵌入 [N×D] 铺成与隐藏状态对齐的 [...×D×N×T]"""
    return ExpandEmbeddings.apply(embeddings, lead_shape=tuple(lead_shape), steps=steps)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def reduce_sum(x: Tensor) -> Tensor:
    return Sum.apply(x)


# =============================================================================
# 归一化与注意力
# =============================================================================


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        shifted = x - x.max(axis=axis, keepdims=True)
        exp = np.exp(shifted)
        self.y = exp / exp.sum(axis=axis, keepdims=True)
        self.axis = axis
        return self.y

    def backward(self, grad: np.ndarray):
        y = self.y
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class LayerNorm(Function):
    def forward(self, x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
        axis = _channel_axis(x.ndim)
        channels = x.shape[axis]
        if gain.shape != (channels,) or bias.shape != (channels,):
            raise DimensionError("layer_norm", f"gain/bias [{channels}]", (gain.shape, bias.shape))
        if eps <= 0:
            raise ArgumentError("layer_norm", "eps", "必须为正数")
        bshape = (channels,) + (1,) * (x.ndim - axis - 1)
        mean = x.mean(axis=axis, keepdims=True)
        var = x.var(axis=axis, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean) * self.inv_std
        self.gain_b = gain.reshape(bshape)
        self.axis = axis
        return self.x_hat * self.gain_b + bias.reshape(bshape)

    def backward(self, grad: np.ndarray):
        axis = self.axis
        g_hat = grad * self.gain_b
        dx = self.inv_std * (
            g_hat
            - g_hat.mean(axis=axis, keepdims=True)
            - self.x_hat * (g_hat * self.x_hat).mean(axis=axis, keepdims=True)
        )
        reduce_axes = tuple(i for i in range(grad.ndim) if i != axis)
        dgain = (grad * self.x_hat).sum(axis=reduce_axes)
        dbias = grad.sum(axis=reduce_axes)
        return dx, dgain, dbias


class ScaledScores(Function):
    def forward(self, q: np.ndarray, k: np.ndarray, scale: float = 1.0) -> np.ndarray:
        if q.shape != k.shape:
            raise DimensionError("scaled_scores", q.shape, k.shape)
        _require_feature_map("scaled_scores", q)
        self.q, self.k, self.scale = q, k, scale
        # [...×A×N×T] × [...×A×N×T] -> [...×T×N×N]
        return np.einsum("...ait,...ajt->...tij", q, k, optimize=True) * scale

    def backward(self, grad: np.ndarray):
        dq = np.einsum("...tij,...ajt->...ait", grad, self.k, optimize=True) * self.scale
        dk = np.einsum("...tij,...ait->...ajt", grad, self.q, optimize=True) * self.scale
        return dq, dk


class WeightedSum(Function):
    def forward(self, alpha: np.ndarray, h: np.ndarray) -> np.ndarray:
        _require_feature_map("weighted_sum", h)
        n, t = h.shape[-2], h.shape[-1]
        if alpha.shape != h.shape[:-3] + (t, n, n):
            raise DimensionError("weighted_sum", h.shape[:-3] + (t, n, n), alpha.shape)
        self.alpha, self.h = alpha, h
        return np.einsum("...tij,...cjt->...cit", alpha, h, optimize=True)

    def backward(self, grad: np.ndarray):
        dalpha = np.einsum("...cit,...cjt->...tij", grad, self.h, optimize=True)
        dh = np.einsum("...tij,...cit->...cjt", self.alpha, grad, optimize=True)
        return dalpha, dh


class MaskedMSE(Function):
    def forward(self, x_hat: np.ndarray, x_true: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if x_hat.shape != x_true.shape or x_hat.shape != mask.shape:
            raise DimensionError("masked_mse_loss", x_hat.shape, (x_true.shape, mask.shape))
        self.count = float(mask.sum())
        self.diff = (x_hat - x_true) * mask
        if self.count == 0:
            return np.asarray(0.0)
        return np.asarray((self.diff * self.diff).sum() / self.count)

    def backward(self, grad: np.ndarray):
        if self.count == 0:
            zeros = np.zeros_like(self.diff)
            return zeros, zeros, None
        g = float(grad) * 2.0 * self.diff / self.count
        return g, -g, None


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """数值稳定的 softmax（先减去最大值）"""
    return Softmax.apply(x, axis=axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """在通道维上对每个 (node, time) 位置做归一化"""
    return LayerNorm.apply(x, gain, bias, eps=eps)


def scaled_scores(q: Tensor, k: Tensor, scale: float) -> Tensor:
    """逐时间步的节点对内积打分 scores[t,i,j] = scale·⟨q[:,i,t], k[:,j,t]⟩"""
    return ScaledScores.apply(q, k, scale=scale)


def weighted_sum(alpha: Tensor, h: Tensor) -> Tensor:
    """out[c,i,t] = Σ_j alpha[t,i,j] · h[c,j,t]"""
    return WeightedSum.apply(alpha, h)


def masked_mse(x_hat: Tensor, x_true, mask) -> Tensor:
    """掩码位置上的均方误差；掩码为空时返回 0"""
    return MaskedMSE.apply(x_hat, as_tensor(x_true), as_tensor(mask))


def inverse_sqrt(dim: int) -> float:
    return 1.0 / math.sqrt(dim)
