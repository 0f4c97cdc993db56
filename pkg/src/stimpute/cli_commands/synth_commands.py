"""
Synthetic Data Commands

stimpute synth: 生成带已知空间耦合的合成交通矩阵
"""

from ..error_handler import handle_command_errors
from ..logger import logger
from ..synthetic import generate_synthetic, neighbor_correlations, write_synthetic
from .common import ensure_out_dir


@handle_command_errors
def synth_command(args) -> int:
    """执行 synth 命令"""
    dataset = generate_synthetic(args.nodes, args.steps, args.seed)
    out = ensure_out_dir(args.out)
    csv_path, meta_path = write_synthetic(dataset, out)

    logger.success(f"Wrote {dataset.num_steps}×{dataset.num_nodes} matrix to {csv_path}")
    if dataset.num_steps > 2:
        corr = neighbor_correlations(dataset.values)
        logger.info(
            f"  Neighbor correlation {corr['neighbor']:.3f}, far correlation {corr['far']:.3f}"
        )
    logger.info(f"  Metadata: {meta_path}")
    return 0
