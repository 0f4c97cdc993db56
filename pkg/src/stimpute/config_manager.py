"""
运行配置管理模块
默认值来自包内的 config_template.json，按 默认 < 配置文件 < 命令行 的顺序合并；
配置文件中的未知键在任何计算开始之前就被拒绝
"""

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from .baselines import BaselineKind
from .exceptions import (
    ConfigError,
    ConfigKeyError,
    ConfigNotFoundError,
    ConfigParseError,
    ConfigurationError,
    ConfigValidationError,
)
from .hash_utils import config_fingerprint
from .logger import logger
from .masking import MaskSpec
from .model import ModelConfig
from .trainer import TrainConfig

TEMPLATE_NAME = "config_template.json"
# 只做说明用的顶层键，不参与合并
META_KEYS = ("version", "description", "fingerprint")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _builtin_defaults() -> Dict[str, Any]:
    """包内资源不可读时使用的默认结构（与模板一致）"""
    return {
        "version": "0.1.0",
        "description": "stimpute run configuration",
        "model": {
            "num_nodes": None,
            "num_blocks": 4,
            "channels": 32,
            "kernel_size": 2,
            "dilations": None,
            "embed_dim": 16,
            "attn_dim": 64,
            "skip_channels": 64,
            "end_channels": 64,
            "past_steps": 6,
            "future_steps": 6,
            "layer_norm_eps": 1e-5,
        },
        "train": {
            "learning_rate": 1e-3,
            "batch_size": 32,
            "max_epochs": 100,
            "patience": 10,
            "grad_clip_norm": 5.0,
            "seed": 0,
            "max_steps": None,
        },
        "mask": {"missing_rate": 0.2, "seed": 0, "mode": "random"},
        "data": {"fractions": [0.5, 0.8, 1.0]},
        "evaluation": {
            "missing_rates": [0.2, 0.4, 0.6],
            "baselines": ["linear_interpolation", "historical_mean", "last_observation"],
            "workers": 1,
        },
        "logging": {"log_level": "INFO", "file_log_level": "DEBUG", "log_dir": "~/.stimpute/logs"},
    }


def load_template() -> Dict[str, Any]:
    try:
        with resources.files("stimpute").joinpath(TEMPLATE_NAME).open("r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError, ModuleNotFoundError):
        return _builtin_defaults()


def _flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


class RunConfigManager:
    """
    一次运行的完整配置

    与全局设置不同，每条命令各自构造一个实例，所以不做单例
    """

    def __init__(
        self,
        config_path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ):
        self.template = load_template()
        self.defaults = _flatten({k: v for k, v in self.template.items() if k not in META_KEYS})
        self.config_path = Path(config_path) if config_path else None
        self.sources: Dict[str, str] = {key: "default" for key in self.defaults}
        self.config = dict(self.defaults)

        if self.config_path is not None:
            self._apply_layer(self._load_json_config(self.config_path), f"file ({self.config_path})")
        if overrides:
            self.apply_overrides(overrides)

    # =========================================================================
    # 加载与合并
    # =========================================================================

    def _load_json_config(self, path: Path) -> Dict[str, Any]:
        if not path.exists():
            raise ConfigNotFoundError(str(path))
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigParseError(str(path), str(e))
        if not isinstance(data, dict):
            raise ConfigParseError(str(path), "顶层必须是 JSON 对象")
        return data

    def _check_known_keys(self, data: Mapping[str, Any], prefix: str = ""):
        for key, value in data.items():
            path = f"{prefix}{key}"
            if not prefix and key in META_KEYS:
                continue
            section_prefix = f"{path}."
            is_section = any(k.startswith(section_prefix) for k in self.defaults)
            if is_section:
                if not isinstance(value, dict):
                    raise ConfigValidationError(path, value, "应为 JSON 对象")
                self._check_known_keys(value, section_prefix)
            elif path not in self.defaults:
                raise ConfigKeyError(path)

    def _apply_layer(self, data: Mapping[str, Any], source: str):
        self._check_known_keys(data)
        flat = _flatten({k: v for k, v in data.items() if k not in META_KEYS})
        for key, value in flat.items():
            self.config[key] = value
            self.sources[key] = source

    def apply_overrides(self, overrides: Mapping[str, Any], source: str = "cli"):
        """点分键覆盖；值为 None 的条目被忽略（表示命令行未给出）"""
        for key, value in overrides.items():
            if value is None:
                continue
            self.set(key, value, source)

    # =========================================================================
    # 读写
    # =========================================================================

    def get(self, key: str, default: Any = None) -> Any:
        return self.config.get(key, default)

    def set(self, key: str, value: Any, source: str = "runtime"):
        if key not in self.defaults:
            raise ConfigKeyError(key)
        self.config[key] = value
        self.sources[key] = source

    def get_config_source(self, key: str) -> str:
        return self.sources.get(key, "default")

    def convert_config_value(self, key: str, raw: str) -> Any:
        """把命令行字符串转换为与默认值同类型的值（列表、null 用 JSON 写法）"""
        if key not in self.defaults:
            raise ConfigKeyError(key)
        default = self.defaults[key]
        text = raw.strip()
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ConfigValidationError(key, raw, "应为布尔值")
        if isinstance(default, str):
            return text
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            raise ConfigValidationError(key, raw, "无法解析为数值或 JSON")

    def section(self, name: str) -> Dict[str, Any]:
        prefix = f"{name}."
        return {k[len(prefix):]: v for k, v in self.config.items() if k.startswith(prefix)}

    def resolved(self) -> Dict[str, Any]:
        """完整配置（含默认值）的嵌套结构"""
        nested: Dict[str, Any] = {"version": self.template.get("version")}
        for key, value in self.config.items():
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = copy.deepcopy(value)
        return nested

    def fingerprint(self) -> str:
        return config_fingerprint(self.resolved())

    def dump(self, path: Union[str, Path]) -> Path:
        """写出 run_config.json"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.resolved()
        data["fingerprint"] = self.fingerprint()
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        logger.log_artifact("run_config", str(path))
        return path

    # =========================================================================
    # 类型化配置
    # =========================================================================

    def to_model_config(self, num_nodes: Optional[int] = None):
        """
        num_nodes 通常来自数据集；配置里也写了 num_nodes 时两者必须一致
        """
        values = self.section("model")
        configured = values.pop("num_nodes")
        if configured is not None and num_nodes is not None and configured != num_nodes:
            raise ConfigurationError(
                "num_nodes", f"配置中 model.num_nodes = {configured}，数据有 {num_nodes} 个传感器"
            )
        nodes = num_nodes if num_nodes is not None else configured
        if nodes is None:
            raise ConfigurationError("num_nodes", "未给出 model.num_nodes，且没有可推断节点数的数据")
        if values.get("dilations") is not None:
            values["dilations"] = tuple(values["dilations"])
        return ModelConfig(num_nodes=nodes, **values)

    def to_train_config(self):
        return TrainConfig(**self.section("train"))

    def to_mask_spec(self):
        return MaskSpec(**self.section("mask"))

    def fractions(self) -> List[float]:
        values = self.get("data.fractions")
        if not isinstance(values, list) or not values:
            raise ConfigValidationError("data.fractions", values, "应为非空列表")
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v <= 1:
                raise ConfigValidationError("data.fractions", values, "每个比例都必须位于 (0, 1]")
        return [float(v) for v in values]

    def missing_rates(self) -> List[float]:
        values = self.get("evaluation.missing_rates")
        if not isinstance(values, list) or not values:
            raise ConfigValidationError("evaluation.missing_rates", values, "应为非空列表")
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
                raise ConfigValidationError("evaluation.missing_rates", values, "缺失率必须位于 [0, 1]")
        return [float(v) for v in values]

    def baselines(self) -> List[str]:
        values = self.get("evaluation.baselines")
        if not isinstance(values, list):
            raise ConfigValidationError("evaluation.baselines", values, "应为列表")
        return [BaselineKind.parse(v).value for v in values]

    def workers(self) -> int:
        value = self.get("evaluation.workers")
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ConfigValidationError("evaluation.workers", value, "必须为正整数")
        return value

    def logging_config(self) -> Dict[str, Any]:
        return self.section("logging")

    # =========================================================================
    # 校验
    # =========================================================================

    def validate_config(self, num_nodes: Optional[int] = None) -> Dict[str, List[str]]:
        """收集所有问题而不是在第一个错误处停下"""
        warnings: List[str] = []
        errors: List[str] = []

        checks = [
            ("model", lambda: self.to_model_config(num_nodes or self.get("model.num_nodes") or 1)),
            ("train", self.to_train_config),
            ("mask", self.to_mask_spec),
            ("data", self.fractions),
            ("evaluation", self.missing_rates),
            ("evaluation", self.baselines),
            ("evaluation", self.workers),
        ]
        for section, check in checks:
            try:
                check()
            except ConfigError as e:
                errors.append(f"{section}: {e.message}")

        for key in ("logging.log_level", "logging.file_log_level"):
            level = self.get(key)
            if not isinstance(level, str) or level.upper() not in LOG_LEVELS:
                errors.append(f"{key} ({level}) must be one of {', '.join(LOG_LEVELS)}")

        patience, max_epochs = self.get("train.patience"), self.get("train.max_epochs")
        if isinstance(patience, int) and isinstance(max_epochs, int) and patience >= max_epochs:
            warnings.append(f"train.patience ({patience}) >= train.max_epochs ({max_epochs}); early stopping never triggers")
        if self.get("train.learning_rate") == 0:
            warnings.append("train.learning_rate is 0; parameters will not change")
        if self.get("mask.missing_rate") == 0:
            warnings.append("mask.missing_rate is 0; there is nothing to train on")

        return {"warnings": warnings, "errors": errors}

    def is_config_valid(self, num_nodes: Optional[int] = None) -> bool:
        return not self.validate_config(num_nodes)["errors"]

    def create_user_config(self, path: Union[str, Path], is_force: bool = False) -> Optional[Path]:
        """把模板写到 path；文件已存在且未指定 is_force 时不覆盖"""
        path = Path(path)
        if path.exists() and not is_force:
            logger.warning(f"Config file already exists: {path} (use --force to overwrite)")
            return None
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.template, f, indent=2, ensure_ascii=False)
        logger.success(f"Configuration file created: {path}")
        return path

    def print_config_summary(self):
        print("=== Configuration Summary ===")
        for section in ("model", "train", "mask", "data", "evaluation", "logging"):
            print(f"\n{section}:")
            for key, value in self.section(section).items():
                print(f"  {key}: {value} ({self.get_config_source(f'{section}.{key}')})")

        print("\nConfiguration Sources:")
        print(f"  JSON Config File: {self.config_path or 'Not given'}")
        print(f"  Fingerprint: {self.fingerprint()}")

        result = self.validate_config()
        if result["warnings"]:
            print("\nConfiguration Warnings:")
            for warning in result["warnings"]:
                print(f"  ⚠ {warning}")
        if result["errors"]:
            print("\nConfiguration Errors:")
            for error in result["errors"]:
                print(f"  ✗ {error}")
        if not result["warnings"] and not result["errors"]:
            print("\n✓ Configuration is valid with no issues.")
