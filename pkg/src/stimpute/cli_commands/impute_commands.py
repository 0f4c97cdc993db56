"""
Imputation Commands

stimpute impute: 用 checkpoint 补全所有缺失条目，写出 imputed.csv 与 provenance.csv
"""

import numpy as np

from ..checkpoint import load_checkpoint
from ..dataset import load_matrix_csv, save_mask_csv, save_matrix_csv
from ..error_handler import handle_command_errors
from ..evaluation import PROVENANCE_FALLBACK, PROVENANCE_IMPUTED, ModelImputer
from ..logger import logger
from ..masking import MaskSpec, generate_mask
from .common import ensure_out_dir

IMPUTED_NAME = "imputed.csv"
PROVENANCE_NAME = "provenance.csv"


@handle_command_errors
def impute_command(args) -> int:
    """
    执行 impute 命令

    默认只补全原始缺失；给出 --rate 时额外按掩码隐藏已观测条目后再补全
    """
    spec = MaskSpec(missing_rate=args.rate, seed=args.seed) if args.rate is not None else None
    dataset = load_matrix_csv(args.data)
    checkpoint = load_checkpoint(args.checkpoint, expected_num_nodes=dataset.num_nodes)

    eval_mask = generate_mask(dataset, spec) if spec else np.zeros(dataset.values.shape)
    imputer = ModelImputer(checkpoint.config, checkpoint.params, checkpoint.normalizer)
    result = imputer.impute(dataset, eval_mask)

    out = ensure_out_dir(args.out)
    imputed_path = out / IMPUTED_NAME
    provenance_path = out / PROVENANCE_NAME
    save_matrix_csv(dataset, imputed_path, values=result.values)
    save_mask_csv(dataset, result.provenance, provenance_path)
    logger.log_artifact("imputed", str(imputed_path))
    logger.log_artifact("provenance", str(provenance_path))

    imputed = int((result.provenance == PROVENANCE_IMPUTED).sum())
    fallback = int((result.provenance == PROVENANCE_FALLBACK).sum())
    logger.success(f"Imputed {imputed} entries with the model, {fallback} by linear interpolation")
    return 0
