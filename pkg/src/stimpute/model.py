"""
时空插补网络
输入投影 → 若干 ST-block（门控膨胀 TCN + 带节点嵌入的动态注意力，层归一化、残差与跳跃连接）
→ 跳跃连接求和 → ReLU 输出层，输出目标时间步上每个节点的归一化插补值
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from .exceptions import ConfigurationError
from . import ops
from .tensor import Tensor, as_tensor


# =============================================================================
# 配置
# =============================================================================


def solve_dilations(num_blocks: int, past_steps: int, future_steps: int, kernel_size: int = 2) -> Tuple[int, ...]:
    """
    求解膨胀系数，使 Σ(k−1)·d^l 恰好等于 T_p + T_f

    前 N_st−1 个块按 1, 2, 4, … 翻倍（剩余预算不足时回到 1 重新循环），最后一个块取剩余值
    """
    if kernel_size < 2:
        raise ConfigurationError("receptive_field", f"kernel_size 必须 >= 2，实际 {kernel_size}")
    budget = past_steps + future_steps
    if budget % (kernel_size - 1) != 0:
        raise ConfigurationError(
            "receptive_field",
            f"T_p + T_f = {budget} 不能被 k−1 = {kernel_size - 1} 整除",
        )
    total = budget // (kernel_size - 1)
    if total < num_blocks:
        raise ConfigurationError(
            "receptive_field",
            f"窗口 T_p + T_f = {budget} 不足以容纳 {num_blocks} 个 ST-block",
        )
    dilations: List[int] = []
    remaining = total
    d = 1
    for layer in range(num_blocks - 1):
        blocks_after = num_blocks - 1 - layer
        if remaining - d < blocks_after:
            d = 1
        dilations.append(d)
        remaining -= d
        d *= 2
    dilations.append(remaining)
    return tuple(dilations)


@dataclass
class ModelConfig:
    """网络结构超参数；dilations 为空时按感受野约束自动求解"""

    num_nodes: int
    num_blocks: int = 4
    channels: int = 32
    kernel_size: int = 2
    dilations: Optional[Tuple[int, ...]] = None
    embed_dim: int = 16
    attn_dim: int = 64
    skip_channels: int = 64
    end_channels: int = 64
    past_steps: int = 6
    future_steps: int = 6
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        for name in (
            "num_nodes", "num_blocks", "channels", "kernel_size", "embed_dim",
            "attn_dim", "skip_channels", "end_channels", "past_steps", "future_steps",
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value <= 0:
                raise ConfigurationError("positive_dims", f"{name} 必须为正整数，实际 {value!r}")
        if self.layer_norm_eps <= 0:
            raise ConfigurationError("positive_dims", "layer_norm_eps 必须为正数")
        if self.dilations is None:
            self.dilations = solve_dilations(
                self.num_blocks, self.past_steps, self.future_steps, self.kernel_size
            )
        self.dilations = tuple(int(d) for d in self.dilations)
        self.validate()

    def validate(self):
        """断言感受野恰好消耗整个窗口，最终时间长度为 1"""
        if len(self.dilations) != self.num_blocks:
            raise ConfigurationError(
                "dilations_length",
                f"len(dilations) = {len(self.dilations)} 与 num_blocks = {self.num_blocks} 不一致",
            )
        if any(d <= 0 for d in self.dilations):
            raise ConfigurationError("positive_dims", f"dilations 必须为正: {self.dilations}")
        consumed = sum((self.kernel_size - 1) * d for d in self.dilations)
        if consumed != self.past_steps + self.future_steps:
            raise ConfigurationError(
                "receptive_field",
                f"Σ(k−1)·d = {consumed} 不等于 T_p + T_f = {self.past_steps + self.future_steps}",
                details={"dilations": list(self.dilations)},
            )

    @property
    def window_length(self) -> int:
        return self.past_steps + self.future_steps + 1

    @property
    def target_index(self) -> int:
        return self.past_steps

    @property
    def concat_dim(self) -> int:
        """d_c：隐藏状态与节点嵌入拼接后的维度"""
        return self.channels + self.embed_dim

    def temporal_lengths(self) -> List[int]:
        """T^0 … T^{N_st}"""
        lengths = [self.window_length]
        for d in self.dilations:
            lengths.append(lengths[-1] - (self.kernel_size - 1) * d)
        return lengths

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["dilations"] = list(self.dilations)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        data = dict(data)
        if data.get("dilations") is not None:
            data["dilations"] = tuple(data["dilations"])
        return cls(**data)

    @classmethod
    def tiny(cls, num_nodes: int = 3) -> "ModelConfig":
        """梯度检查用的微型配置"""
        return cls(
            num_nodes=num_nodes,
            num_blocks=2,
            channels=4,
            embed_dim=2,
            attn_dim=4,
            skip_channels=4,
            end_channels=4,
            past_steps=1,
            future_steps=1,
        )


# =============================================================================
# 参数
# =============================================================================


@dataclass
class BlockParams:
    """单个 ST-block 的参数视图"""

    filter: Tensor
    gate: Tensor
    query: Tensor
    key: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    skip_proj: Tensor


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """按固定顺序给出全部参数张量的名称与形状"""
    c, k = config.channels, config.kernel_size
    shapes: Dict[str, Tuple[int, ...]] = {"input_proj": (c, 2)}
    for layer in range(config.num_blocks):
        prefix = f"blocks.{layer}"
        shapes[f"{prefix}.filter"] = (c, c, k)
        shapes[f"{prefix}.gate"] = (c, c, k)
        shapes[f"{prefix}.query"] = (config.attn_dim, config.concat_dim)
        shapes[f"{prefix}.key"] = (config.attn_dim, config.concat_dim)
        shapes[f"{prefix}.ln_gain"] = (c,)
        shapes[f"{prefix}.ln_bias"] = (c,)
        shapes[f"{prefix}.skip_proj"] = (config.skip_channels, c)
    shapes["node_embeddings"] = (config.num_nodes, config.embed_dim)
    shapes["head.w1"] = (config.end_channels, config.skip_channels)
    shapes["head.b1"] = (config.end_channels,)
    shapes["head.w2"] = (1, config.end_channels)
    shapes["head.b2"] = (1,)
    return shapes


class ModelParams:
    """全部可学习参数，按 parameter_shapes 的顺序保存"""

    def __init__(self, config: ModelConfig, tensors: Dict[str, Tensor]):
        expected = parameter_shapes(config)
        if list(tensors) != list(expected):
            raise ConfigurationError("parameter_names", f"参数名与配置不一致: {list(tensors)}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ConfigurationError(
                    "parameter_shapes", f"{name} 形状 {tensors[name].shape} 应为 {shape}"
                )
        self.config = config
        self._tensors = tensors

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        """
        权重 ~ U(−1/√fan_in, 1/√fan_in)；节点嵌入 ~ N(0, 0.1)；
        层归一化 gain=1 / bias=0；输出层偏置为 0
        """
        rng = np.random.Generator(np.random.PCG64(seed))
        tensors: Dict[str, Tensor] = {}
        for name, shape in parameter_shapes(config).items():
            if name == "node_embeddings":
                data = rng.normal(0.0, 0.1, size=shape)
            elif name.endswith("ln_gain"):
                data = np.ones(shape)
            elif name.endswith("ln_bias") or name.startswith("head.b"):
                data = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True, name=name)
        return cls(config, tensors)

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: Dict[str, np.ndarray]) -> "ModelParams":
        return cls(
            config,
            {name: Tensor(np.array(arr, dtype=np.float64), requires_grad=True, name=name) for name, arr in arrays.items()},
        )

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def block(self, layer: int) -> BlockParams:
        prefix = f"blocks.{layer}"
        return BlockParams(
            filter=self[f"{prefix}.filter"],
            gate=self[f"{prefix}.gate"],
            query=self[f"{prefix}.query"],
            key=self[f"{prefix}.key"],
            ln_gain=self[f"{prefix}.ln_gain"],
            ln_bias=self[f"{prefix}.ln_bias"],
            skip_proj=self[f"{prefix}.skip_proj"],
        )

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._tensors.items()
        }

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """参数快照（深拷贝）"""
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        for name, t in self._tensors.items():
            if arrays[name].shape != t.shape:
                raise ConfigurationError("parameter_shapes", f"{name} 形状不一致")
            t.data[...] = arrays[name]

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.config, self.state_arrays())

    def permute_nodes(self, order) -> "ModelParams":
        """节点嵌入按新的传感器顺序重排；其余参数与节点无关"""
        arrays = self.state_arrays()
        arrays["node_embeddings"] = arrays["node_embeddings"][list(order)]
        return ModelParams.from_arrays(self.config, arrays)

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def is_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self._tensors.values())


# =============================================================================
# 前向传播
# =============================================================================


@dataclass
class BlockTrace:
    x_t: np.ndarray
    alpha: np.ndarray
    x_s: np.ndarray
    x_out: np.ndarray
    skip: np.ndarray


@dataclass
class ForwardTrace:
    """前向传播中每个 ST-block 的中间结果（只保存数值，不参与求导）"""

    x_in: Optional[np.ndarray] = None
    blocks: List[BlockTrace] = field(default_factory=list)
    skip_sum: Optional[np.ndarray] = None

    def temporal_lengths(self) -> List[int]:
        lengths = [self.x_in.shape[-1]] if self.x_in is not None else []
        return lengths + [b.x_out.shape[-1] for b in self.blocks]


def input_projection(x: Tensor, m: Tensor, params: ModelParams) -> Tensor:
    """X_out^0 = Conv1x1(X ‖ M)，从 2 个输入通道升到 C 个"""
    return ops.conv1x1(ops.concat_channels(x, m), params["input_proj"])


def gated_tcn_forward(x_prev: Tensor, block_params: BlockParams, dilation: int) -> Tensor:
    """tanh(W_f ∗ x) ⊙ σ(W_g ∗ x)，时间长度减少 (k−1)·d"""
    k = block_params.filter.shape[-1]
    if x_prev.shape[-1] <= (k - 1) * dilation:
        raise ConfigurationError(
            "window_length",
            f"时间长度 {x_prev.shape[-1]} 不足以做 dilation={dilation}, k={k} 的卷积",
        )
    filt = ops.tanh(ops.conv1d_dilated(x_prev, block_params.filter, dilation))
    gate = ops.sigmoid(ops.conv1d_dilated(x_prev, block_params.gate, dilation))
    return ops.mul(filt, gate)


def _attention_logits(h: Tensor, embeddings: Tensor, w_q: Tensor, w_k: Tensor) -> Tensor:
    lead = h.shape[:-3]
    steps = h.shape[-1]
    joined = ops.concat_channels(h, ops.expand_embeddings(embeddings, lead, steps))
    q = ops.conv1x1(joined, w_q)
    k = ops.conv1x1(joined, w_k)
    return ops.scaled_scores(q, k, ops.inverse_sqrt(w_q.shape[0]))


def attention_scores(h: Tensor, embeddings: Tensor, w_q: Tensor, w_k: Tensor) -> Tensor:
    """
    α = softmax_j(⟨W_q(h_i‖e_i), W_k(h_j‖e_j)⟩ / √d′)

    h 为单个时间步的 [C×N] 时返回 [N×N]；为 [(B×)C×N×T] 时返回 [(B×)T×N×N]
    """
    single_step = h.ndim == 2
    if single_step:
        h = ops.reshape(h, h.shape + (1,))
    alpha = ops.softmax(_attention_logits(h, embeddings, w_q, w_k), axis=-1)
    if single_step:
        n = alpha.shape[-1]
        alpha = ops.reshape(alpha, (n, n))
    return alpha


def dan_forward(
    x_t: Tensor,
    embeddings: Tensor,
    w_q: Tensor,
    w_k: Tensor,
    return_alpha: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """逐时间步 h'_i = Σ_j α_ij · h_j，输出形状与输入相同"""
    alpha = attention_scores(x_t, embeddings, w_q, w_k)
    out = ops.weighted_sum(alpha, x_t)
    if return_alpha:
        return out, alpha
    return out


def st_block_forward(
    x_out_prev: Tensor,
    block_params: BlockParams,
    dilation: int,
    embeddings: Tensor,
    eps: float = 1e-5,
    trace: Optional[ForwardTrace] = None,
) -> Tuple[Tensor, Tensor]:
    """
    x_T = gated_tcn(x)；skip = Conv1x1(x_T)；x_S = DAN(LayerNorm(x_T))；
    x_out = x_S + crop(x_prev)，crop 保留 x_prev 的最后 T^l 步
    """
    x_t = gated_tcn_forward(x_out_prev, block_params, dilation)
    skip = ops.conv1x1(x_t, block_params.skip_proj)
    normed = ops.layer_norm(x_t, block_params.ln_gain, block_params.ln_bias, eps)
    x_s, alpha = dan_forward(normed, embeddings, block_params.query, block_params.key, return_alpha=True)
    x_out = ops.add(x_s, ops.crop_time(x_out_prev, x_t.shape[-1]))
    if trace is not None:
        trace.blocks.append(
            BlockTrace(
                x_t=x_t.data.copy(),
                alpha=alpha.data.copy(),
                x_s=x_s.data.copy(),
                x_out=x_out.data.copy(),
                skip=skip.data.copy(),
            )
        )
    return x_out, skip


class ImputationNetwork:
    """插补网络；本身无状态，参数由 ModelParams 显式传入"""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config

    def init_params(self, seed: int = 0) -> ModelParams:
        return ModelParams.initialize(self.config, seed)

    def _check_input(self, x: Tensor, m: Tensor):
        cfg = self.config
        if x.shape != m.shape:
            raise ConfigurationError("input_shape", f"x {x.shape} 与 m {m.shape} 形状不一致")
        if x.ndim not in (3, 4) or x.shape[-3] != 1:
            raise ConfigurationError("input_shape", f"输入应为 [(B×)1×N×T_w]，实际 {x.shape}")
        if x.shape[-2] != cfg.num_nodes:
            raise ConfigurationError(
                "num_nodes", f"输入节点数 {x.shape[-2]} 与配置 num_nodes={cfg.num_nodes} 不一致"
            )
        if x.shape[-1] != cfg.window_length:
            raise ConfigurationError(
                "window_length", f"输入时间长度 {x.shape[-1]} 应为 T_p + T_f + 1 = {cfg.window_length}"
            )

    def forward(
        self,
        x: Tensor,
        m: Tensor,
        params: ModelParams,
        trace: Optional[ForwardTrace] = None,
    ) -> Tensor:
        """
        x, m: [(B×)1×N×T_w]，返回 [(B×)N] 的归一化插补值

        trace 非空时记录每个块的中间结果
        """
        cfg = self.config
        self._check_input(x, m)
        if trace is not None:
            trace.x_in = x.data.copy()

        lengths = cfg.temporal_lengths()
        embeddings = params["node_embeddings"]
        hidden = input_projection(x, m, params)
        skip_sum: Optional[Tensor] = None
        for layer, dilation in enumerate(cfg.dilations):
            hidden, skip = st_block_forward(
                hidden, params.block(layer), dilation, embeddings, cfg.layer_norm_eps, trace
            )
            if hidden.shape[-1] != lengths[layer + 1]:
                raise ConfigurationError(
                    "shape_chain", f"block {layer} 输出长度 {hidden.shape[-1]} 应为 {lengths[layer + 1]}"
                )
            last = ops.crop_time(skip, 1)
            skip_sum = last if skip_sum is None else ops.add(skip_sum, last)

        if trace is not None:
            trace.skip_sum = skip_sum.data.copy()

        out = ops.relu(skip_sum)
        out = ops.relu(ops.conv1x1(out, params["head.w1"], params["head.b1"]))
        out = ops.conv1x1(out, params["head.w2"], params["head.b2"])
        return ops.reshape(out, x.shape[:-3] + (cfg.num_nodes,))

    def predict(self, x: np.ndarray, m: np.ndarray, params: ModelParams) -> np.ndarray:
        """不记录 tape 的推理"""
        return self.forward(Tensor(x), Tensor(m), params).data


def model_forward(sample, params: ModelParams, config: ModelConfig) -> Tensor:
    """单个 WindowSample 的前向传播，返回 [N]"""
    network = ImputationNetwork(config)
    return network.forward(as_tensor(sample.x_window), as_tensor(sample.m_window), params)


def masked_mse_loss(x_hat: Tensor, x_true, eval_mask) -> Tensor:
    """
    只在人工掩码（有真值）位置上求均方误差

    批量输入时按掩码条目数加权（等价于对所有掩码条目取平均）；没有掩码条目时损失为 0
    """
    return ops.masked_mse(x_hat, x_true, eval_mask)
