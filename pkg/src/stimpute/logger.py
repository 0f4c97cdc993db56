"""
增强的日志模块
使用标准Python logging库，支持文件轮转、彩色输出、结构化日志和可配置日志级别
"""

import sys
import os
import json
import logging
import logging.handlers
import uuid
from pathlib import Path
from typing import Optional, Dict, Any
from datetime import datetime, timezone
from contextlib import contextmanager


# =============================================================================
# 日志配置常量
# =============================================================================

DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_FILE_LOG_LEVEL = "DEBUG"
DEFAULT_MAX_BYTES = 5 * 1024 * 1024  # 5MB
DEFAULT_BACKUP_COUNT = 5
DEFAULT_LOG_DIR = "~/.stimpute/logs"

_RESERVED_RECORD_KEYS = (
    "name", "msg", "args", "created", "filename", "funcName",
    "levelname", "levelno", "lineno", "module", "msecs",
    "pathname", "process", "processName", "relativeCreated",
    "stack_info", "exc_info", "exc_text", "thread", "threadName",
    "message", "run_id", "taskName",
)


def resolve_log_config(
    cli_console_level: Optional[str] = None,
    cli_file_level: Optional[str] = None,
    cli_log_dir: Optional[str] = None,
    env: Optional[Dict[str, str]] = None,
    config: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """解析日志配置优先级：CLI 参数 > 环境变量 > 配置文件 > 默认值"""
    env = os.environ if env is None else env
    config = {} if config is None else config

    console_level = (
        cli_console_level
        or env.get("STIMPUTE_LOG_LEVEL")
        or config.get("log_level")
        or DEFAULT_LOG_LEVEL
    )
    file_level = (
        cli_file_level
        or env.get("STIMPUTE_FILE_LOG_LEVEL")
        or config.get("file_log_level")
        or DEFAULT_FILE_LOG_LEVEL
    )
    log_dir = (
        cli_log_dir
        or env.get("STIMPUTE_LOG_DIR")
        or config.get("log_dir")
        or DEFAULT_LOG_DIR
    )

    return {
        "console_level": str(console_level).upper(),
        "file_level": str(file_level).upper(),
        "log_dir": log_dir,
    }


# =============================================================================
# 格式化器
# =============================================================================


class ColoredFormatter(logging.Formatter):
    """彩色日志格式化器"""

    # ANSI颜色码
    COLORS = {
        "DEBUG": "\033[96m",  # 青色
        "INFO": "\033[94m",  # 蓝色
        "WARNING": "\033[93m",  # 黄色
        "ERROR": "\033[91m",  # 红色
        "CRITICAL": "\033[95m",  # 紫色
        "RESET": "\033[0m",  # 重置
    }

    def __init__(self, use_color: bool = True, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.use_color = use_color and self._supports_color()

    def _supports_color(self) -> bool:
        """检查终端是否支持颜色"""
        if os.environ.get("NO_COLOR"):
            return False
        return (
            hasattr(sys.stdout, "isatty")
            and sys.stdout.isatty()
            and os.environ.get("TERM", "").lower() != "dumb"
            and os.name != "nt"
        )

    def format(self, record: logging.LogRecord) -> str:
        """格式化日志记录"""
        if self.use_color and record.levelname in self.COLORS:
            original_levelname = record.levelname
            record.levelname = (
                f"{self.COLORS[record.levelname]}{record.levelname}{self.COLORS['RESET']}"
            )
            formatted = super().format(record)
            record.levelname = original_levelname
            return formatted
        return super().format(record)


class JSONFormatter(logging.Formatter):
    """JSON 结构化日志格式化器"""

    def __init__(self, include_extra: bool = True):
        super().__init__()
        self.include_extra = include_extra

    def format(self, record: logging.LogRecord) -> str:
        """格式化日志记录为 JSON"""
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        if hasattr(record, "run_id"):
            log_data["run_id"] = record.run_id

        if self.include_extra:
            extra_fields = {}
            for key, value in record.__dict__.items():
                if key in _RESERVED_RECORD_KEYS:
                    continue
                try:
                    json.dumps(value)
                    extra_fields[key] = value
                except (TypeError, ValueError):
                    extra_fields[key] = str(value)
            if extra_fields:
                log_data["extra"] = extra_fields

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, ensure_ascii=False)


class STImputeLogger:
    """stimpute 的日志管理器，负责控制台/文件输出和训练、评估事件的结构化记录"""

    # 类级别的运行 ID（一次 CLI 命令对应一个）
    _current_run_id: Optional[str] = None

    def __init__(
        self,
        name: str = "stimpute",
        log_dir: Optional[str] = None,
        use_color: bool = True,
        console_level: Optional[str] = None,
        file_level: Optional[str] = None,
        config: Optional[Dict[str, Any]] = None,
        max_bytes: int = DEFAULT_MAX_BYTES,
        backup_count: int = DEFAULT_BACKUP_COUNT,
        enable_json_file: bool = False,
    ):
        """
        初始化日志管理器

        Args:
            name: 日志器名称
            log_dir: 日志目录路径，None表示按优先级解析
            use_color: 是否在控制台使用颜色
            console_level: 控制台日志级别
            file_level: 文件日志级别
            config: 运行配置中的 logging 段
            max_bytes: 单个日志文件最大字节数
            backup_count: 日志备份数量
            enable_json_file: 是否启用 JSON 格式的日志文件
        """
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()

        resolved = resolve_log_config(
            cli_console_level=console_level,
            cli_file_level=file_level,
            cli_log_dir=log_dir,
            config=config,
        )
        self.log_dir = Path(resolved["log_dir"]).expanduser()
        self.max_bytes = max_bytes
        self.backup_count = backup_count
        self.file_logging = False

        self._setup_console_handler(use_color, resolved["console_level"])

        # 日志目录不可写时退化为仅控制台输出
        try:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            self._setup_file_handler(resolved["file_level"])
            if enable_json_file:
                self._setup_json_file_handler(resolved["file_level"])
            self.file_logging = True
        except OSError as e:
            self.logger.debug(f"File logging disabled: {e}")

        self.logger.propagate = False

        self._metrics: Dict[str, Any] = {
            "steps": 0,
            "epochs": 0,
            "windows_skipped": 0,
            "metrics_reported": 0,
        }

    def _setup_console_handler(self, use_color: bool, level: str):
        """设置控制台日志处理器"""
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(getattr(logging, level.upper(), logging.INFO))
        console_handler.setFormatter(ColoredFormatter(use_color=use_color, fmt="%(message)s"))
        self.logger.addHandler(console_handler)

    def _setup_file_handler(self, level: str):
        """设置文件日志处理器（支持轮转）"""
        file_handler = logging.handlers.RotatingFileHandler(
            self.log_dir / "stimpute.log",
            maxBytes=self.max_bytes,
            backupCount=self.backup_count,
            encoding="utf-8",
        )
        file_handler.setLevel(getattr(logging, level.upper(), logging.DEBUG))
        file_handler.setFormatter(
            logging.Formatter(
                fmt="%(asctime)s - %(name)s - %(levelname)s - %(module)s:%(lineno)d - %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
        self.logger.addHandler(file_handler)

    def _setup_json_file_handler(self, level: str):
        """设置 JSON 格式的日志文件处理器"""
        json_handler = logging.handlers.RotatingFileHandler(
            self.log_dir / "stimpute.json.log",
            maxBytes=self.max_bytes,
            backupCount=self.backup_count,
            encoding="utf-8",
        )
        json_handler.setLevel(getattr(logging, level.upper(), logging.DEBUG))
        json_handler.setFormatter(JSONFormatter(include_extra=True))
        self.logger.addHandler(json_handler)

    def _add_run_id(self, extra: Optional[Dict] = None) -> Dict:
        """添加运行 ID 到日志额外信息"""
        extra = dict(extra or {})
        if self._current_run_id:
            extra["run_id"] = self._current_run_id
        return extra

    @classmethod
    def set_run_id(cls, run_id: Optional[str] = None) -> str:
        """设置当前运行 ID"""
        cls._current_run_id = run_id or str(uuid.uuid4())[:8]
        return cls._current_run_id

    @classmethod
    def clear_run_id(cls):
        """清除当前运行 ID"""
        cls._current_run_id = None

    @classmethod
    @contextmanager
    def run_context(cls, run_id: Optional[str] = None):
        """运行上下文管理器"""
        rid = cls.set_run_id(run_id)
        try:
            yield rid
        finally:
            cls.clear_run_id()

    def info(self, msg: str, **kwargs):
        self.logger.info(msg, extra=self._add_run_id(kwargs.get("extra")))

    def success(self, msg: str, **kwargs):
        """成功日志（以INFO级别记录）"""
        self.logger.info(f"✓ {msg}", extra=self._add_run_id(kwargs.get("extra")))

    def warning(self, msg: str, **kwargs):
        self.logger.warning(msg, extra=self._add_run_id(kwargs.get("extra")))

    def error(self, msg: str, **kwargs):
        self.logger.error(msg, extra=self._add_run_id(kwargs.get("extra")))

    def debug(self, msg: str, **kwargs):
        self.logger.debug(msg, extra=self._add_run_id(kwargs.get("extra")))

    # =========================================================================
    # 结构化日志方法
    # =========================================================================

    def log_epoch(
        self,
        epoch: int,
        train_loss: float,
        val_loss: Optional[float],
        seconds: float,
        steps: int,
    ):
        """记录一个训练 epoch"""
        self._metrics["epochs"] += 1
        self._metrics["steps"] = steps
        extra = self._add_run_id(
            {
                "event_type": "epoch",
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "seconds": round(seconds, 3),
                "steps": steps,
            }
        )
        val_text = "n/a" if val_loss is None else f"{val_loss:.6f}"
        self.logger.info(
            f"Epoch {epoch}: train_loss={train_loss:.6f} val_loss={val_text} ({seconds:.1f}s)",
            extra=extra,
        )

    def log_training_abort(self, epoch: int, batch: int, learning_rate: float, loss: float):
        """记录训练因数值问题中止"""
        extra = self._add_run_id(
            {
                "event_type": "training_abort",
                "epoch": epoch,
                "batch": batch,
                "learning_rate": learning_rate,
                "loss": str(loss),
            }
        )
        self.logger.error(
            f"Training aborted at epoch {epoch} batch {batch}: loss={loss} lr={learning_rate}",
            extra=extra,
        )

    def log_windows_skipped(self, count: int, context: str):
        """记录越界被跳过的窗口数"""
        self._metrics["windows_skipped"] += count
        if count:
            self.logger.debug(
                f"{count} windows skipped ({context})",
                extra=self._add_run_id(
                    {"event_type": "windows_skipped", "count": count, "context": context}
                ),
            )

    def log_metrics(
        self,
        dataset: str,
        missing_rate: float,
        method: str,
        mae: float,
        mape: Optional[float],
        rmse: float,
        n_eval: int,
    ):
        """记录一条评估指标"""
        self._metrics["metrics_reported"] += 1
        extra = self._add_run_id(
            {
                "event_type": "metrics",
                "dataset": dataset,
                "missing_rate": missing_rate,
                "method": method,
                "mae": mae,
                "mape": mape,
                "rmse": rmse,
                "n_eval": n_eval,
            }
        )
        mape_text = "n/a" if mape is None else f"{mape:.4f}"
        self.logger.info(
            f"{method} @ {missing_rate:.0%}: MAE={mae:.4f} MAPE={mape_text} RMSE={rmse:.4f} (n={n_eval})",
            extra=extra,
        )

    def log_gradcheck(self, parameter: str, max_rel_error: float, excluded: int, passed: bool):
        """记录单个参数张量的梯度检查结果"""
        extra = self._add_run_id(
            {
                "event_type": "gradcheck",
                "parameter": parameter,
                "max_rel_error": max_rel_error,
                "excluded": excluded,
                "passed": passed,
            }
        )
        level = logging.INFO if passed else logging.WARNING
        self.logger.log(
            level,
            f"gradcheck {parameter}: max_rel_error={max_rel_error:.3e} excluded={excluded}",
            extra=extra,
        )

    def log_artifact(self, kind: str, path: str):
        """记录写出的产物文件"""
        self.logger.debug(
            f"Wrote {kind}: {path}",
            extra=self._add_run_id({"event_type": "artifact", "kind": kind, "path": path}),
        )

    # =========================================================================
    # 指标和状态
    # =========================================================================

    def get_metrics(self) -> Dict[str, Any]:
        """获取运行指标"""
        return self._metrics.copy()


class Logger:
    """模块级 logger 代理，允许 CLI 在解析参数后重新配置"""

    def __init__(self, use_color: bool = True):
        self._enhanced_logger = STImputeLogger(use_color=use_color)

    def configure(
        self,
        *,
        log_dir: Optional[str] = None,
        use_color: bool = True,
        console_level: Optional[str] = None,
        file_level: Optional[str] = None,
        config: Optional[Dict[str, Any]] = None,
        max_bytes: int = DEFAULT_MAX_BYTES,
        backup_count: int = DEFAULT_BACKUP_COUNT,
        enable_json_file: bool = False,
    ):
        """重新配置日志器（用于 CLI 覆盖）"""
        self._enhanced_logger = STImputeLogger(
            log_dir=log_dir,
            use_color=use_color,
            console_level=console_level,
            file_level=file_level,
            config=config,
            max_bytes=max_bytes,
            backup_count=backup_count,
            enable_json_file=enable_json_file,
        )

    def __getattr__(self, name: str):
        # info / warning / log_epoch 等全部转发给当前的 STImputeLogger
        return getattr(self._enhanced_logger, name)


# 全局 logger 实例
logger = Logger()
