"""
Training Commands

stimpute train: 掩码 → 切分 → 归一化 → 训练，写出 checkpoint.bin、history.csv、run_config.json
"""

from ..checkpoint import Checkpoint, save_checkpoint
from ..config_manager import RunConfigManager
from ..dataset import load_matrix_csv
from ..error_handler import handle_command_errors
from ..hash_utils import array_digest
from ..logger import logger
from ..masking import generate_mask, masked_fraction
from ..model import ImputationNetwork
from ..trainer import prepare_training_data, train
from .common import ensure_out_dir

CHECKPOINT_NAME = "checkpoint.bin"
HISTORY_NAME = "history.csv"
RUN_CONFIG_NAME = "run_config.json"


def build_train_config_manager(args) -> RunConfigManager:
    """配置文件 + 命令行覆盖；--seed 同时决定掩码和训练随机数"""
    overrides = {
        "mask.missing_rate": args.rate,
        "mask.seed": args.seed,
        "train.seed": args.seed,
        "train.learning_rate": args.lr,
        "train.max_epochs": args.epochs,
        "train.max_steps": args.max_steps,
        "train.batch_size": args.batch_size,
    }
    return RunConfigManager(args.config, overrides=overrides)


@handle_command_errors
def train_command(args) -> int:
    """执行 train 命令"""
    manager = build_train_config_manager(args)
    # 数据加载之前先校验不依赖节点数的部分
    train_config = manager.to_train_config()
    mask_spec = manager.to_mask_spec()

    dataset = load_matrix_csv(args.data)
    model_config = manager.to_model_config(dataset.num_nodes)
    manager.set("model.num_nodes", dataset.num_nodes, source="data")

    out = ensure_out_dir(args.out)
    manager.dump(out / RUN_CONFIG_NAME)

    logger.info(
        f"Training on {dataset.name}: {dataset.num_steps} steps × {dataset.num_nodes} sensors, "
        f"dilations {list(model_config.dilations)}"
    )
    eval_mask = generate_mask(dataset, mask_spec)
    logger.info(f"Artificially hidden {masked_fraction(dataset, eval_mask):.1%} of observed entries")

    data = prepare_training_data(dataset, eval_mask, model_config, data_fraction=args.data_fraction)
    network = ImputationNetwork(model_config)
    params = network.init_params(train_config.seed)
    logger.debug(f"Model has {params.num_parameters()} parameters")

    trained = train(network, params, data, train_config)

    history_path = out / HISTORY_NAME
    trained.history.to_csv(history_path)
    logger.log_artifact("history", str(history_path))

    checkpoint = Checkpoint(
        config=model_config,
        params=trained.params,
        normalizer=trained.normalizer,
        train_step=trained.history.steps,
        metadata={
            "dataset": dataset.name,
            "data_digest": array_digest(dataset.values),
            "missing_rate": mask_spec.missing_rate,
            "mask_seed": mask_spec.seed,
            "train_seed": train_config.seed,
            "data_fraction": args.data_fraction,
            "best_epoch": trained.history.best_epoch,
            "run_config_fingerprint": manager.fingerprint(),
        },
    )
    save_checkpoint(checkpoint, out / CHECKPOINT_NAME)

    logger.success(
        f"Training finished after {len(trained.history.epochs)} epochs "
        f"({trained.history.steps} steps, best epoch {trained.history.best_epoch})"
    )
    return 0
