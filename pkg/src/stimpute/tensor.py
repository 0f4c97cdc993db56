"""
反向模式自动微分核心
Tensor 保存 float64 数据与累积梯度；Tape 按执行顺序记录运算（define-by-run），
backward 逆序回放每个运算的反向规则
"""

import threading
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ArgumentError, DimensionError

MAX_RANK = 4

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_local = threading.local()


def _tape_stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


class Tape:
    """
    运算记录带

    每次前向传播新建一条；只有在 `with Tape():` 作用域内执行、且输入需要梯度的运算才会被记录。
    不同线程各自持有独立的 tape 栈。
    """

    def __init__(self):
        self.nodes: List["Function"] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def record(self, node: "Function"):
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    @staticmethod
    def current() -> Optional["Tape"]:
        """当前线程上处于激活状态的 tape"""
        stack = _tape_stack()
        return stack[-1] if stack else None


class Tensor:
    """稠密 float64 张量，rank 不超过 4"""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > MAX_RANK:
            raise DimensionError("Tensor", f"rank <= {MAX_RANK}", self.data.shape)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.creator: Optional["Function"] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ArgumentError("item", "tensor", f"需要单元素张量，实际形状 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate_grad(self, grad: np.ndarray):
        """梯度按加法累积；调用方负责在两步之间清零"""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.data.shape:
            raise DimensionError("accumulate_grad", self.data.shape, grad.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self):
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from .ops import add

        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from .ops import mul

        return mul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


class Function:
    """
    可微运算基类

    子类实现 `forward`（输入为 numpy 数组）与 `backward`（输入为输出梯度，
    返回与 inputs 一一对应的梯度，不需要的位置返回 None）。
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs
        self.output: Optional[Tensor] = None

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)

        tape = Tape.current()
        requires_grad = tape is not None and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad:
            func.output = out
            out.creator = func
            out._tape = tape
            tape.record(func)
        return out


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """把数组包装为不需要梯度的常量张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def backward(loss: Tensor):
    """
    从标量 loss 出发逆序回放 tape

    tape 上出现但不影响 loss 的 requires_grad 张量得到全零梯度
    """
    if loss.size != 1:
        raise ArgumentError("backward", "loss", f"需要标量，实际形状 {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise ArgumentError("backward", "loss", "loss 未记录在任何 tape 上")

    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and t.grad is None:
                t.zero_grad()

    loss.accumulate_grad(np.ones_like(loss.data))

    for node in reversed(tape.nodes):
        out = node.output
        if out is None or out.grad is None:
            continue
        input_grads = node.backward(out.grad)
        for t, g in zip(node.inputs, input_grads):
            if g is None or not t.requires_grad:
                continue
            t.accumulate_grad(g)
