"""
pytest 配置文件
提供测试 fixtures 和全局配置
"""

import os
import sys
import tempfile
import shutil
from pathlib import Path
from typing import Generator

import numpy as np
import pytest

# 确保 src 目录在 Python path 中
src_path = Path(__file__).parent.parent / "src"
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

# 在导入 stimpute 之前设置，模块级 logger 初始化时就不会写用户目录
_LOG_DIR = tempfile.mkdtemp(prefix="stimpute_test_logs_")
os.environ["STIMPUTE_LOG_DIR"] = _LOG_DIR
os.environ["NO_COLOR"] = "1"


# ============================================================
# 测试环境隔离配置
# ============================================================

@pytest.fixture(scope="session", autouse=True)
def setup_test_environment():
    """
    设置测试环境变量，确保测试隔离
    日志写到临时目录，关闭颜色输出
    """
    os.environ["STIMPUTE_LOG_DIR"] = _LOG_DIR
    os.environ["NO_COLOR"] = "1"
    os.environ.pop("STIMPUTE_LOG_LEVEL", None)
    os.environ.pop("STIMPUTE_FILE_LOG_LEVEL", None)

    yield

    os.environ.pop("STIMPUTE_LOG_DIR", None)
    os.environ.pop("NO_COLOR", None)
    shutil.rmtree(_LOG_DIR, ignore_errors=True)


# ============================================================
# 临时目录和文件 fixtures
# ============================================================

@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """
    创建临时目录用于测试
    测试结束后自动清理
    """
    temp_path = Path(tempfile.mkdtemp(prefix="stimpute_test_"))
    yield temp_path

    if temp_path.exists():
        shutil.rmtree(temp_path)


@pytest.fixture
def sample_csv(temp_dir: Path) -> Path:
    """
    3 个传感器、6 个时间步的小 CSV，含两个原始缺失
    """
    path = temp_dir / "sample.csv"
    path.write_text(
        "timestamp,a,b,c\n"
        "2024-01-01 00:00:00,1.0,10.0,100.0\n"
        "2024-01-01 00:05:00,2.0,,101.0\n"
        "2024-01-01 00:10:00,3.0,12.0,102.0\n"
        "2024-01-01 00:15:00,,13.0,103.0\n"
        "2024-01-01 00:20:00,5.0,14.0,104.0\n"
        "2024-01-01 00:25:00,6.0,15.0,105.0\n",
        encoding="utf-8",
    )
    return path


# ============================================================
# 数据与模型 fixtures
# ============================================================

@pytest.fixture
def tiny_config():
    """N=3, C=4, 两个 ST-block, T_p = T_f = 1"""
    from stimpute.model import ModelConfig

    return ModelConfig.tiny(3)


@pytest.fixture
def small_config():
    """训练测试用的小配置：4 个节点，窗口长度 5"""
    from stimpute.model import ModelConfig

    return ModelConfig(
        num_nodes=4,
        num_blocks=2,
        channels=8,
        embed_dim=4,
        attn_dim=8,
        skip_channels=8,
        end_channels=8,
        past_steps=2,
        future_steps=2,
    )


@pytest.fixture
def synthetic_dataset():
    """4 个节点、200 个时间步的完全观测合成数据"""
    from stimpute.synthetic import generate_synthetic

    return generate_synthetic(4, 200, seed=3)


@pytest.fixture
def gappy_dataset():
    """带原始缺失的小数据集（10 个时间步 × 3 个传感器）"""
    from stimpute.dataset import STDataset

    rng = np.random.Generator(np.random.PCG64(11))
    values = rng.normal(50.0, 5.0, size=(10, 3))
    values[2, 0] = np.nan
    values[5, 1] = np.nan
    values[6, 1] = np.nan
    native = (~np.isnan(values)).astype(np.float64)
    return STDataset(
        values=values,
        native_mask=native,
        sensor_ids=["x", "y", "z"],
        name="gappy",
    )


@pytest.fixture
def write_dataset(temp_dir: Path):
    """把数据集写成 CSV 并返回路径"""
    from stimpute.dataset import save_matrix_csv

    def _write(dataset, name: str = "data.csv") -> Path:
        path = temp_dir / name
        save_matrix_csv(dataset, path)
        return path

    return _write


# ============================================================
# 辅助函数
# ============================================================

def pytest_configure(config):
    """
    pytest 配置钩子
    注册自定义标记
    """
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )


def pytest_collection_modifyitems(config, items):
    """
    修改测试项，自动为测试添加标记
    """
    for item in items:
        # 为集成测试添加标记
        if "integration" in item.nodeid:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)
