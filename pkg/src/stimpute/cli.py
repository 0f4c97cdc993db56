import argparse
import sys
from typing import List, Optional

from . import __author__, __email__, __version__
from .cli_commands import (
    analysis_commands,
    check_commands,
    config_commands,
    evaluate_commands,
    impute_commands,
    synth_commands,
    train_commands,
)
from .config_manager import RunConfigManager
from .exceptions import EXIT_INVALID_INPUT, STImputeException
from .gradcheck import DEFAULT_TOLERANCE
from .logger import logger


def get_version_info():
    """获取版本信息字符串"""
    return f"""Spatiotemporal Traffic Imputation v{__version__}
Author: {__author__} ({__email__})
License: MIT"""


def _config_logging_section(config_path: Optional[str]) -> dict:
    """从 --config 文件读取 logging 段；文件有问题时留给命令本身报告"""
    if not config_path:
        return {}
    try:
        return RunConfigManager(config_path).logging_config()
    except STImputeException:
        return {}


def _add_synth_parser(subparsers):
    p = subparsers.add_parser("synth", help="Generate a synthetic ring-graph traffic matrix")
    p.add_argument("--nodes", type=int, required=True, help="Number of sensors (>= 2)")
    p.add_argument("--steps", type=int, required=True, help="Number of 5-minute time steps")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--out", type=str, required=True, help="Output directory")
    p.set_defaults(func=synth_commands.synth_command)


def _add_train_parser(subparsers):
    p = subparsers.add_parser("train", help="Train the imputation network on a sensor CSV")
    p.add_argument("--data", type=str, required=True, help="Sensor matrix CSV (timestamp + one column per sensor)")
    p.add_argument("--config", type=str, help="Run configuration JSON")
    p.add_argument("--rate", type=float, help="Artificial missing rate in [0, 1]")
    p.add_argument("--seed", type=int, help="Seed for the mask and the training run")
    p.add_argument("--out", type=str, required=True, help="Output directory")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--epochs", type=int, help="Maximum number of epochs")
    p.add_argument("--max-steps", type=int, help="Stop after this many optimizer steps")
    p.add_argument("--batch-size", type=int, help="Windows per batch")
    p.add_argument(
        "--data-fraction",
        type=float,
        default=1.0,
        help="Use only the leading fraction of the training split (default: 1.0)",
    )
    p.set_defaults(func=train_commands.train_command)


def _add_evaluate_parser(subparsers):
    p = subparsers.add_parser("evaluate", help="Compare the model and baselines on the test split")
    p.add_argument("--data", type=str, required=True, help="Sensor matrix CSV")
    p.add_argument("--checkpoint", type=str, help="Trained checkpoint (omit for baselines only)")
    p.add_argument("--config", type=str, help="Run configuration JSON")
    p.add_argument("--rates", type=str, help="Comma-separated missing rates (e.g. 0.2,0.4,0.6)")
    p.add_argument(
        "--baselines",
        type=str,
        help="Comma-separated baseline names, or 'none' (default: all)",
    )
    p.add_argument("--seed", type=int, help="Mask seed; rate i uses seed XOR i")
    p.add_argument("--workers", type=int, help="Parallel (rate, method) jobs")
    p.add_argument("--out", type=str, required=True, help="Output directory")
    p.set_defaults(func=evaluate_commands.evaluate_command)


def _add_impute_parser(subparsers):
    p = subparsers.add_parser("impute", help="Fill all missing entries with a trained model")
    p.add_argument("--data", type=str, required=True, help="Sensor matrix CSV")
    p.add_argument("--checkpoint", type=str, required=True, help="Trained checkpoint")
    p.add_argument("--rate", type=float, help="Additionally hide this fraction of observed entries")
    p.add_argument("--seed", type=int, default=0, help="Seed for --rate (default: 0)")
    p.add_argument("--out", type=str, required=True, help="Output directory")
    p.set_defaults(func=impute_commands.impute_command)


def _add_gradcheck_parser(subparsers):
    p = subparsers.add_parser("gradcheck", help="Finite-difference check of every parameter gradient")
    p.add_argument("--config", type=str, help="Run configuration JSON (model section is used)")
    p.add_argument("--seed", type=int, default=0, help="Seed for parameters and inputs (default: 0)")
    p.add_argument(
        "--tolerance",
        type=float,
        default=DEFAULT_TOLERANCE,
        help=f"Maximum relative error (default: {DEFAULT_TOLERANCE:g})",
    )
    p.add_argument("--out", type=str, help="Also write gradcheck.json here")
    p.set_defaults(func=check_commands.gradcheck_command)


def _add_analysis_parsers(subparsers):
    p = subparsers.add_parser("sensitivity", help="Train on leading fractions of the training split")
    p.add_argument("--data", type=str, required=True, help="Sensor matrix CSV")
    p.add_argument("--config", type=str, help="Run configuration JSON")
    p.add_argument("--fractions", type=str, help="Comma-separated fractions (e.g. 0.5,0.8,1.0)")
    p.add_argument("--rate", type=float, help="Artificial missing rate in [0, 1]")
    p.add_argument("--seed", type=int, help="Seed for the mask and the training runs")
    p.add_argument("--epochs", type=int, help="Maximum number of epochs per run")
    p.add_argument("--max-steps", type=int, help="Optimizer step limit per run")
    p.add_argument("--out", type=str, required=True, help="Output directory")
    p.set_defaults(func=analysis_commands.sensitivity_command)

    p = subparsers.add_parser("inspect", help="Export attention matrices and embedding similarity")
    p.add_argument("--data", type=str, required=True, help="Sensor matrix CSV")
    p.add_argument("--checkpoint", type=str, required=True, help="Trained checkpoint")
    p.add_argument("--rate", type=float, default=0.2, help="Missing rate used to pick windows (default: 0.2)")
    p.add_argument("--seed", type=int, default=0, help="Mask seed (default: 0)")
    p.add_argument("--max-windows", type=int, default=256, help="Windows to average over (default: 256)")
    p.add_argument("--out", type=str, required=True, help="Output directory")
    p.set_defaults(func=analysis_commands.inspect_command)


def _add_config_parser(subparsers):
    p = subparsers.add_parser("config", help="Create, show or validate a run configuration")
    config_sub = p.add_subparsers(dest="config_action", metavar="ACTION")

    create = config_sub.add_parser("create", help="Write the default configuration template")
    create.add_argument("--path", type=str, help="Target file (default: stimpute.json)")
    create.add_argument("--force", action="store_true", help="Overwrite an existing file")
    create.set_defaults(func=config_commands.create_config_command)

    for name, func, text in (
        ("show", config_commands.show_config_command, "Show the merged configuration"),
        ("validate", config_commands.validate_config_command, "Validate a configuration"),
    ):
        action = config_sub.add_parser(name, help=text)
        action.add_argument("--config", type=str, help="Run configuration JSON")
        action.add_argument(
            "--set",
            nargs=2,
            action="append",
            metavar=("KEY", "VALUE"),
            help="Override a dotted key (e.g. --set train.learning_rate 0.0005)",
        )
        action.set_defaults(func=func)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description=f"Spatiotemporal Traffic Imputation v{__version__} - fill missing sensor readings",
        prog="stimpute",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  stimpute synth --nodes 8 --steps 2016 --seed 7 --out data/
  stimpute train --data data/synthetic.csv --rate 0.2 --seed 0 --out run/
  stimpute evaluate --data data/synthetic.csv --checkpoint run/checkpoint.bin --out run/
  stimpute impute --data sensors.csv --checkpoint run/checkpoint.bin --out filled/
  stimpute gradcheck
        """,
    )

    parser.add_argument(
        "-v",
        "--version",
        action="version",
        version=get_version_info(),
        help="Show version information",
    )
    parser.add_argument("--no-color", action="store_true", help="Disable colored output")
    parser.add_argument(
        "--log-level",
        type=str,
        help="Override console log level (e.g., DEBUG, INFO, WARNING, ERROR)",
    )
    parser.add_argument(
        "--file-log-level",
        type=str,
        help="Override file log level (e.g., DEBUG, INFO, WARNING, ERROR)",
    )
    parser.add_argument(
        "--log-dir",
        type=str,
        help="Override log directory (e.g., ~/.stimpute/logs)",
    )
    parser.add_argument(
        "--json-log",
        action="store_true",
        help="Also write structured JSON-lines logs",
    )

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    _add_synth_parser(subparsers)
    _add_train_parser(subparsers)
    _add_evaluate_parser(subparsers)
    _add_impute_parser(subparsers)
    _add_gradcheck_parser(subparsers)
    _add_analysis_parsers(subparsers)
    _add_config_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_INVALID_INPUT

    logger.configure(
        log_dir=args.log_dir,
        console_level=args.log_level,
        file_level=args.file_log_level,
        config=_config_logging_section(getattr(args, "config", None)),
        use_color=not args.no_color,
        enable_json_file=args.json_log,
    )

    try:
        with logger.run_context():
            logger.debug(f"stimpute {__version__} {args.command}: {' '.join(argv or sys.argv[1:])}")
            return args.func(args)
    except KeyboardInterrupt:
        logger.warning("Operation cancelled by user")
        return 130
