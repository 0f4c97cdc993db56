"""
Configuration Management Commands

stimpute config create | show | validate
"""

from ..config_manager import RunConfigManager
from ..error_handler import handle_command_errors
from ..exceptions import EXIT_INVALID_INPUT, EXIT_SUCCESS

DEFAULT_CONFIG_NAME = "stimpute.json"


@handle_command_errors
def create_config_command(args) -> int:
    """把带默认值的模板写到 --path"""
    manager = RunConfigManager()
    path = args.path or DEFAULT_CONFIG_NAME
    created = manager.create_user_config(path, is_force=args.force)
    if not created:
        print(f"✗ Configuration file not written: {path}")
        return EXIT_INVALID_INPUT
    print("You can now edit this file and pass it with --config.")
    return EXIT_SUCCESS


def _manager_with_sets(args) -> RunConfigManager:
    manager = RunConfigManager(args.config)
    for key, raw in args.set or []:
        manager.set(key, manager.convert_config_value(key, raw), source="cli")
    return manager


@handle_command_errors
def show_config_command(args) -> int:
    """显示合并后的配置及每个键的来源"""
    _manager_with_sets(args).print_config_summary()
    return EXIT_SUCCESS


@handle_command_errors
def validate_config_command(args) -> int:
    """校验配置；有错误时退出码为 2"""
    manager = _manager_with_sets(args)
    validation_result = manager.validate_config()

    print("=== Configuration Validation ===")
    if validation_result["errors"]:
        print("Configuration Errors:")
        for error in validation_result["errors"]:
            print(f"  ✗ {error}")
    if validation_result["warnings"]:
        print("Configuration Warnings:")
        for warning in validation_result["warnings"]:
            print(f"  ⚠ {warning}")
    if not validation_result["errors"] and not validation_result["warnings"]:
        print("✓ Configuration is valid")

    return EXIT_INVALID_INPUT if validation_result["errors"] else EXIT_SUCCESS
