"""
Analysis Commands

stimpute sensitivity: 训练数据比例敏感性
stimpute inspect: 导出注意力矩阵与节点嵌入相似度
"""

from ..analysis import (
    embedding_similarity,
    inspect_attention,
    run_data_fraction_sensitivity,
    write_node_matrix,
)
from ..checkpoint import load_checkpoint
from ..config_manager import RunConfigManager
from ..dataset import load_matrix_csv
from ..error_handler import handle_command_errors
from ..logger import logger
from ..masking import MaskSpec, generate_mask
from ..model import ImputationNetwork
from ..windows import make_windows
from .common import ensure_out_dir, parse_float_list, write_text

SENSITIVITY_JSON = "sensitivity.json"
SENSITIVITY_TEXT = "sensitivity.txt"
SIMILARITY_NAME = "embedding_similarity.csv"


@handle_command_errors
def sensitivity_command(args) -> int:
    """执行 sensitivity 命令"""
    overrides = {
        "data.fractions": parse_float_list(args.fractions, "data.fractions"),
        "mask.missing_rate": args.rate,
        "mask.seed": args.seed,
        "train.seed": args.seed,
        "train.max_epochs": args.epochs,
        "train.max_steps": args.max_steps,
    }
    manager = RunConfigManager(args.config, overrides=overrides)
    fractions = manager.fractions()
    train_config = manager.to_train_config()
    mask_spec = manager.to_mask_spec()

    dataset = load_matrix_csv(args.data)
    model_config = manager.to_model_config(dataset.num_nodes)

    report = run_data_fraction_sensitivity(
        dataset,
        model_config,
        train_config,
        fractions=fractions,
        missing_rate=mask_spec.missing_rate,
        seed=mask_spec.seed,
    )
    report.metadata["config_fingerprint"] = manager.fingerprint()

    out = ensure_out_dir(args.out)
    json_path = out / SENSITIVITY_JSON
    report.write_json(json_path)
    logger.log_artifact("sensitivity", str(json_path))
    table = report.render_table()
    write_text(out / SENSITIVITY_TEXT, table, "sensitivity_table")
    print(table)
    return 0


@handle_command_errors
def inspect_command(args) -> int:
    """
    执行 inspect 命令

    注意力在按 --rate 隐藏后的所有完整窗口上取平均；窗口数由 --max-windows 限制
    """
    spec = MaskSpec(missing_rate=args.rate, seed=args.seed)
    dataset = load_matrix_csv(args.data)
    checkpoint = load_checkpoint(args.checkpoint, expected_num_nodes=dataset.num_nodes)

    eval_mask = generate_mask(dataset, spec)
    samples = []
    for sample in make_windows(dataset, eval_mask, checkpoint.normalizer, checkpoint.config, mode="train"):
        samples.append(sample)
        if len(samples) >= args.max_windows:
            break

    network = ImputationNetwork(checkpoint.config)
    attention = inspect_attention(network, checkpoint.params, samples)
    if not attention:
        logger.warning("No complete windows with hidden entries; attention matrices not written")

    out = ensure_out_dir(args.out)
    for layer, matrix in enumerate(attention):
        path = out / f"attention_block{layer}.csv"
        write_node_matrix(matrix, dataset.sensor_ids, path)
        logger.log_artifact("attention", str(path))

    similarity_path = out / SIMILARITY_NAME
    write_node_matrix(embedding_similarity(checkpoint.params), dataset.sensor_ids, similarity_path)
    logger.log_artifact("embedding_similarity", str(similarity_path))

    logger.success(f"Inspected {len(samples)} windows across {len(attention)} blocks")
    return 0
