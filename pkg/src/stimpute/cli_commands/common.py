"""
命令之间共用的参数解析与输出目录处理
"""

from pathlib import Path
from typing import List, Optional, Union

from ..exceptions import ConfigValidationError
from ..logger import logger


def parse_float_list(text: Optional[str], key: str) -> Optional[List[float]]:
    """"0.2,0.4,0.6" → [0.2, 0.4, 0.6]；未给出时返回 None"""
    if text is None:
        return None
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigValidationError(key, text, "应为逗号分隔的数字")
    if not values:
        raise ConfigValidationError(key, text, "至少需要一个值")
    return values


def parse_name_list(text: Optional[str]) -> Optional[List[str]]:
    """逗号分隔的方法名；"none" 表示空列表"""
    if text is None:
        return None
    if text.strip().lower() == "none":
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def ensure_out_dir(path: Union[str, Path]) -> Path:
    out = Path(path).expanduser()
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_text(path: Path, text: str, kind: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    logger.log_artifact(kind, str(path))
