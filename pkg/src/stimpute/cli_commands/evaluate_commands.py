"""
Evaluation Commands

stimpute evaluate: 在测试段上比较模型与基线，写出 report.json 和 report.txt
"""

from ..checkpoint import load_checkpoint
from ..config_manager import RunConfigManager
from ..dataset import load_matrix_csv
from ..error_handler import handle_command_errors
from ..evaluation import ModelImputer, build_imputers, evaluate
from ..exceptions import ConfigValidationError
from ..logger import logger
from .common import ensure_out_dir, parse_float_list, parse_name_list, write_text

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"


@handle_command_errors
def evaluate_command(args) -> int:
    """执行 evaluate 命令；不给 --checkpoint 时只评估基线"""
    overrides = {
        "evaluation.missing_rates": parse_float_list(args.rates, "evaluation.missing_rates"),
        "evaluation.baselines": parse_name_list(args.baselines),
        "evaluation.workers": args.workers,
        "mask.seed": args.seed,
    }
    manager = RunConfigManager(args.config, overrides=overrides)
    rates = manager.missing_rates()
    workers = manager.workers()
    seed = manager.get("mask.seed")
    # 名称在 build_imputers 里对照注册表校验
    imputers = build_imputers(manager.get("evaluation.baselines"))

    dataset = load_matrix_csv(args.data)
    metadata = {"config_fingerprint": manager.fingerprint()}
    if args.checkpoint:
        checkpoint = load_checkpoint(args.checkpoint, expected_num_nodes=dataset.num_nodes)
        imputers.insert(0, ModelImputer(checkpoint.config, checkpoint.params, checkpoint.normalizer))
        metadata["checkpoint"] = str(args.checkpoint)
        metadata["checkpoint_fingerprint"] = checkpoint.fingerprint
        metadata["checkpoint_train_step"] = checkpoint.train_step
    if not imputers:
        raise ConfigValidationError("evaluation.baselines", [], "没有 checkpoint 时至少需要一个基线方法")

    out = ensure_out_dir(args.out)
    logger.info(
        f"Evaluating {', '.join(i.name for i in imputers)} at rates "
        f"{', '.join(f'{r:g}' for r in rates)} (seed {seed})"
    )
    report = evaluate(imputers, dataset, rates, seed=seed, workers=workers, metadata=metadata)

    json_path = out / REPORT_JSON
    report.write_json(json_path)
    logger.log_artifact("report", str(json_path))
    table = report.render_table()
    write_text(out / REPORT_TEXT, table, "report_table")

    print(table)
    return 0
