"""
Check Commands

stimpute gradcheck: 整个网络的有限差分梯度检查，退出码 0 表示全部参数通过
"""

import json

from ..config_manager import RunConfigManager
from ..error_handler import handle_command_errors
from ..exceptions import EXIT_CHECK_FAILED, EXIT_SUCCESS
from ..gradcheck import run_model_gradcheck
from ..logger import logger
from ..model import ModelConfig
from .common import ensure_out_dir

GRADCHECK_NODES = 3
REPORT_NAME = "gradcheck.json"


def gradcheck_model_config(config_path) -> ModelConfig:
    """默认微型配置；给出配置文件时使用其 model 段（未写 num_nodes 时取 3 个节点）"""
    if config_path is None:
        return ModelConfig.tiny(GRADCHECK_NODES)
    manager = RunConfigManager(config_path)
    return manager.to_model_config(manager.get("model.num_nodes") or GRADCHECK_NODES)


@handle_command_errors
def gradcheck_command(args) -> int:
    """执行 gradcheck 命令"""
    config = gradcheck_model_config(args.config)
    logger.info(
        f"Gradient check: {config.num_nodes} nodes, {config.num_blocks} blocks, "
        f"{config.channels} channels, tolerance {args.tolerance:g}"
    )
    suite = run_model_gradcheck(config, seed=args.seed, tol=args.tolerance)

    for name, report in suite.reports.items():
        logger.log_gradcheck(name, report.max_rel_error, len(report.excluded), report.passed)

    print(f"{'parameter':<24} {'max_rel_error':>14} {'checked':>8} {'excluded':>8}")
    for name, report in suite.reports.items():
        mark = "" if report.passed else "  ✗"
        print(
            f"{name:<24} {report.max_rel_error:>14.3e} {report.checked:>8d} {len(report.excluded):>8d}{mark}"
        )
    print(f"max relative error: {suite.max_rel_error:.3e}")

    if args.out:
        path = ensure_out_dir(args.out) / REPORT_NAME
        with open(path, "w", encoding="utf-8") as f:
            json.dump(suite.to_dict(), f, indent=2)
        logger.log_artifact("gradcheck", str(path))

    if suite.passed:
        logger.success("Gradient check passed")
        return EXIT_SUCCESS
    logger.error(f"✗ Gradient check failed (max relative error {suite.max_rel_error:.3e})")
    return EXIT_CHECK_FAILED
