"""
Helper functions for the command-line pipeline
"""
import argparse
import json
import logging
from pathlib import Path
from typing import Callable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid flag values or combinations; the process exits with code 2."""


def load_config(path) -> dict:
    """
    Read a flat key/value config document whose keys mirror flag names

    Args:
        path: JSON file, e.g. pipeline/pipeline_variables.json

    Returns:
        dict keyed by argparse destination ("clip-norm" -> "clip_norm")
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(document, dict):
        raise UsageError(f"config file {path} must be a flat JSON object")
    nested = [key for key, value in document.items() if isinstance(value, (dict, list))]
    if nested:
        raise UsageError(f"config file {path} must be flat; nested values under {nested}")
    return {key.lstrip("-").replace("-", "_"): value for key, value in document.items()}


def config_defaults(parser: argparse.ArgumentParser, config: dict) -> dict:
    """
    Translate config entries into argparse destinations. Keys may name a flag
    ("clip_norm", "lambda") or a destination ("lam"); the rest are ignored.
    """
    destinations = {}
    for action in parser._actions:
        if action.dest in ("help", "config"):
            continue
        destinations[action.dest] = action.dest
        for option in action.option_strings:
            destinations[option.lstrip("-").replace("-", "_")] = action.dest
    applicable = {destinations[key]: value for key, value in config.items() if key in destinations}
    ignored = sorted(key for key in config if key not in destinations)
    if ignored:
        logger.debug(f"config keys not used by this command: {ignored}")
    return applicable



def parse_with_config(parser: argparse.ArgumentParser, subparsers: dict, argv) -> argparse.Namespace:
    """
    Parse argv so that flags beat config-file values, which beat built-in defaults

    Args:
        parser: top-level parser with a --config option on every subcommand
        subparsers: command name -> subparser
        argv: argument list
    """
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    sub = subparsers[args.command]
    sub.set_defaults(**config_defaults(sub, load_config(config_path)))
    return parser.parse_args(argv)


def task_failure_alert(command: str, error: BaseException) -> None:
    logger.error(f"Command {command} failed with exception: {error}")


def run_command(command: str, task: Callable, args: argparse.Namespace) -> int:
    """Run a command function and map its outcome to an exit code."""
    try:
        task(args)
        return EXIT_OK
    except UsageError as e:
        print(f"usage error: {e}")
        logger.error(f"Command {command}: {e}")
        return EXIT_USAGE
    except Exception as e:
        print(f"error: {e}")
        task_failure_alert(command, e)
        return EXIT_FAILURE
