"""
二进制 checkpoint

布局：
    8 字节魔数 b"STIMPCK1"
    小端 uint64：JSON 头长度
    UTF-8 JSON 头（模型配置、参数名与形状、训练步数、归一化器、元数据、配置指纹）
    各参数按头中顺序以小端 float64 连续存放
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .exceptions import ArgumentError, CheckpointFormatError, ConfigurationError
from .hash_utils import config_fingerprint
from .logger import logger
from .model import ModelConfig, ModelParams, parameter_shapes
from .normalizer import Normalizer

MAGIC = b"STIMPCK1"
FORMAT_VERSION = 1
_HEADER_LEN = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    normalizer: Normalizer
    train_step: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.config.to_dict())


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    names = checkpoint.params.names()
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": checkpoint.config.to_dict(),
        "parameters": [{"name": n, "shape": list(checkpoint.params[n].shape)} for n in names],
        "train_step": int(checkpoint.train_step),
        "normalizer": checkpoint.normalizer.to_dict(),
        "metadata": checkpoint.metadata,
        "fingerprint": checkpoint.fingerprint,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        for name in names:
            f.write(np.ascontiguousarray(checkpoint.params[name].data, dtype=_DTYPE).tobytes())
    logger.log_artifact("checkpoint", str(path))
    return path


def _read_header(path: Path, blob: bytes) -> Dict[str, Any]:
    if len(blob) < len(MAGIC) + _HEADER_LEN.size or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(str(path), "魔数不匹配，不是 stimpute checkpoint")
    (header_len,) = _HEADER_LEN.unpack_from(blob, len(MAGIC))
    start = len(MAGIC) + _HEADER_LEN.size
    if start + header_len > len(blob):
        raise CheckpointFormatError(str(path), "头长度超出文件大小")
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(str(path), f"头部 JSON 损坏: {e}")
    if not isinstance(header, dict):
        raise CheckpointFormatError(str(path), "头部不是 JSON 对象")
    for key in ("model_config", "parameters", "normalizer"):
        if key not in header:
            raise CheckpointFormatError(str(path), f"头部缺少字段 {key}")
    header["_payload_offset"] = start + header_len
    return header


def load_checkpoint(path: Union[str, Path], expected_num_nodes: Optional[int] = None) -> Checkpoint:
    """
    读取 checkpoint；expected_num_nodes 给出时校验节点数

    所有校验在构造参数之前完成，失败时不返回任何部分状态
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointFormatError(str(path), "文件不存在")
    blob = path.read_bytes()
    header = _read_header(path, blob)

    try:
        config = ModelConfig.from_dict(header["model_config"])
    except (TypeError, ValueError, AttributeError) as e:
        raise CheckpointFormatError(str(path), f"模型配置字段无效: {e}")
    if expected_num_nodes is not None and config.num_nodes != expected_num_nodes:
        raise ConfigurationError(
            "num_nodes",
            f"checkpoint 为 {config.num_nodes} 个节点训练，数据有 {expected_num_nodes} 个节点",
        )

    expected = parameter_shapes(config)
    try:
        listed = [(p["name"], tuple(int(d) for d in p["shape"])) for p in header["parameters"]]
    except (TypeError, KeyError, ValueError) as e:
        raise CheckpointFormatError(str(path), f"参数列表格式无效: {e!r}")
    if listed != list(expected.items()):
        raise CheckpointFormatError(str(path), "参数列表与模型配置不一致")

    offset = header["_payload_offset"]
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in listed:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * _DTYPE.itemsize
        if offset + nbytes > len(blob):
            raise CheckpointFormatError(str(path), f"参数 {name} 数据被截断")
        arrays[name] = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointFormatError(str(path), f"文件末尾有 {len(blob) - offset} 字节多余数据")

    try:
        normalizer = Normalizer.from_dict(header["normalizer"])
    except (TypeError, KeyError, ValueError, ArgumentError) as e:
        raise CheckpointFormatError(str(path), f"归一化器字段无效: {e!r}")
    if normalizer.mean.shape != (config.num_nodes,) or normalizer.std.shape != (config.num_nodes,):
        raise CheckpointFormatError(str(path), "归一化器节点数与模型配置不一致")

    return Checkpoint(
        config=config,
        params=ModelParams.from_arrays(config, arrays),
        normalizer=normalizer,
        train_step=int(header.get("train_step", 0)),
        metadata=header.get("metadata", {}),
    )
