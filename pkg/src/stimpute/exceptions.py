"""
统一异常类模块
定义 stimpute 项目的异常类层次结构，每个异常携带错误码、详情、恢复建议和 CLI 退出码
"""

from typing import Optional, Dict, Any


EXIT_SUCCESS = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID_INPUT = 2
EXIT_NUMERICAL_ABORT = 3


class STImputeException(Exception):
    """
    stimpute 基础异常类
    所有自定义异常都应该继承此类
    """

    exit_code = EXIT_INVALID_INPUT

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
        recovery_hint: Optional[str] = None,
    ):
        """
        初始化异常

        Args:
            message: 错误消息
            error_code: 错误代码（可选）
            details: 错误详细信息（可选）
            recovery_hint: 恢复建议（可选）
        """
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        self.recovery_hint = recovery_hint

    def __str__(self) -> str:
        result = self.message
        if self.error_code:
            result = f"[{self.error_code}] {result}"
        if self.recovery_hint:
            result = f"{result}\n提示: {self.recovery_hint}"
        return result

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "type": self.__class__.__name__,
            "message": self.message,
            "error_code": self.error_code,
            "details": self.details,
            "recovery_hint": self.recovery_hint,
            "exit_code": self.exit_code,
        }


# =============================================================================
# 张量 / 自动微分相关异常
# =============================================================================


class TensorError(STImputeException):
    """张量运算相关异常基类"""

    pass


class DimensionError(TensorError):
    """形状不匹配异常"""

    def __init__(self, op: str, expected: Any, got: Any):
        super().__init__(
            message=f"{op}: 形状不匹配，期望 {expected}，实际 {got}",
            error_code="DIMENSION_ERROR",
            details={"op": op, "expected": str(expected), "got": str(got)},
            recovery_hint="检查输入张量的通道/节点/时间维度是否与权重一致",
        )


class ArgumentError(TensorError):
    """参数取值异常"""

    def __init__(self, op: str, argument: str, reason: str):
        super().__init__(
            message=f"{op}: 参数 '{argument}' 无效: {reason}",
            error_code="ARGUMENT_ERROR",
            details={"op": op, "argument": argument, "reason": reason},
        )


# =============================================================================
# 配置相关异常
# =============================================================================


class ConfigError(STImputeException):
    """配置相关异常基类"""

    pass


class ConfigurationError(ConfigError):
    """模型/运行配置违反不变量"""

    def __init__(self, invariant: str, reason: str, details: Optional[Dict[str, Any]] = None):
        merged = {"invariant": invariant, "reason": reason}
        merged.update(details or {})
        super().__init__(
            message=f"配置违反不变量 '{invariant}': {reason}",
            error_code="CONFIGURATION_ERROR",
            details=merged,
            recovery_hint="调整 model 配置中的 window / dilations / num_nodes 使其满足约束",
        )
        self.invariant = invariant


class ConfigNotFoundError(ConfigError):
    """配置文件未找到异常"""

    def __init__(self, config_path: str):
        super().__init__(
            message=f"配置文件未找到: {config_path}",
            error_code="CONFIG_NOT_FOUND",
            details={"config_path": config_path},
            recovery_hint="使用 'stimpute config create --path <file>' 创建配置文件",
        )


class ConfigParseError(ConfigError):
    """配置文件解析异常"""

    def __init__(self, config_path: str, parse_error: str):
        super().__init__(
            message=f"配置文件解析失败: {parse_error}",
            error_code="CONFIG_PARSE_ERROR",
            details={"config_path": config_path, "parse_error": parse_error},
            recovery_hint="检查配置文件的 JSON 格式是否正确",
        )


class ConfigValidationError(ConfigError):
    """配置验证异常"""

    def __init__(self, key: str, value: Any, reason: str):
        super().__init__(
            message=f"配置项 '{key}' 验证失败: {reason}",
            error_code="CONFIG_VALIDATION_ERROR",
            details={"key": key, "value": value, "reason": reason},
            recovery_hint=f"请检查配置项 '{key}' 的值是否正确",
        )


class ConfigKeyError(ConfigError):
    """无效配置键异常"""

    def __init__(self, key: str):
        super().__init__(
            message=f"无效的配置键: {key}",
            error_code="CONFIG_KEY_ERROR",
            details={"key": key},
            recovery_hint="使用 'stimpute config show' 查看有效的配置项",
        )


# =============================================================================
# 数据相关异常
# =============================================================================


class DataError(STImputeException):
    """数据加载相关异常基类"""

    pass


class ParseError(DataError):
    """CSV 解析异常（行长度不一致等）"""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(
            message=f"CSV 解析失败 ({path}:{line}): {reason}",
            error_code="PARSE_ERROR",
            details={"path": path, "line": line, "reason": reason},
            recovery_hint="确保每一行的字段数与表头 'timestamp,<sensor_id>,...' 一致",
        )


class DataFormatError(DataError):
    """数据格式异常（时间戳不单调等）"""

    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"数据格式错误 ({path}): {reason}",
            error_code="DATA_FORMAT_ERROR",
            details={"path": path, "reason": reason},
            recovery_hint="时间戳必须可解析且严格递增",
        )


class EmptyDatasetError(DataError):
    """空数据集异常"""

    def __init__(self, path: str):
        super().__init__(
            message=f"数据集为空: {path}",
            error_code="EMPTY_DATASET",
            details={"path": path},
            recovery_hint="文件至少需要一行观测数据",
        )


# =============================================================================
# 检查点相关异常
# =============================================================================


class CheckpointError(STImputeException):
    """检查点相关异常基类"""

    pass


class CheckpointFormatError(CheckpointError):
    """检查点文件损坏或格式不符"""

    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"检查点文件无效 ({path}): {reason}",
            error_code="CHECKPOINT_FORMAT_ERROR",
            details={"path": path, "reason": reason},
            recovery_hint="重新运行 'stimpute train' 生成检查点",
        )


# =============================================================================
# 数值相关异常
# =============================================================================


class NumericalError(STImputeException):
    """数值计算相关异常基类"""

    exit_code = EXIT_NUMERICAL_ABORT


class NumericalAbortError(NumericalError):
    """训练过程中出现 NaN 损失"""

    def __init__(self, learning_rate: float, epoch: int, batch: int, loss: float):
        super().__init__(
            message=(
                f"训练中止: epoch {epoch} batch {batch} 出现非有限损失 {loss} "
                f"(learning_rate={learning_rate})"
            ),
            error_code="NUMERICAL_ABORT",
            details={
                "learning_rate": learning_rate,
                "epoch": epoch,
                "batch": batch,
                "loss": str(loss),
            },
            recovery_hint="降低 learning_rate 或 grad_clip_norm 后重试",
        )


# =============================================================================
# 评估相关异常
# =============================================================================


class EvaluationError(STImputeException):
    """评估相关异常基类"""

    pass


class EmptyEvaluationSetError(EvaluationError):
    """评估集合为空"""

    def __init__(self, context: str):
        super().__init__(
            message=f"评估集合为空: {context}",
            error_code="EMPTY_EVALUATION_SET",
            details={"context": context},
            recovery_hint="提高 missing_rate 或使用更长的数据",
        )


class MetricsInvariantError(EvaluationError):
    """指标不变量被破坏"""

    def __init__(self, invariant: str, values: Dict[str, Any]):
        super().__init__(
            message=f"指标不变量 '{invariant}' 不成立: {values}",
            error_code="METRICS_INVARIANT",
            details={"invariant": invariant, "values": values},
        )


# =============================================================================
# 工具函数
# =============================================================================


def format_exception_for_user(exc: Exception) -> str:
    """
    格式化异常信息用于用户显示

    Args:
        exc: 异常实例

    Returns:
        格式化后的错误消息
    """
    if isinstance(exc, STImputeException):
        return str(exc)
    else:
        return f"发生错误: {str(exc)}"


def is_recoverable(exc: Exception) -> bool:
    """
    判断评估时是否可以跳过该异常继续（例如某个组合没有可评估的条目）
    """
    recoverable_types = (EmptyEvaluationSetError,)
    return isinstance(exc, recoverable_types)


def exit_code_for(exc: BaseException) -> int:
    """将异常映射到 CLI 退出码"""
    if isinstance(exc, STImputeException):
        return exc.exit_code
    # 不可写路径、非法参数等都视为无效输入
    return EXIT_INVALID_INPUT
