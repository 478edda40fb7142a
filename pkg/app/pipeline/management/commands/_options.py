"""
Flags shared by the pipeline commands
"""
from django.core.management.base import CommandError

from core.exceptions import ConfigError
from pipeline.config import resolve_config

OVERRIDES = ("name", "seed", "deterministic", "stage_select", "way", "shot",
             "query", "episodes")


def add_config_arguments(parser):
    parser.add_argument("--config", help="KEY=value run configuration file")
    parser.add_argument("--name", help="run name")
    parser.add_argument("--seed", type=int, help="seed of every generator")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        default=None,
        help="single-threaded, deterministic kernels",
    )
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the resolved configuration and exit",
    )


def add_protocol_arguments(parser):
    parser.add_argument("--stage-select", type=int, choices=(1, 2, 3),
                        help="transformer set whose [cls] is evaluated")
    parser.add_argument("--way", type=int, help="classes per episode")
    parser.add_argument("--shot", type=int, help="support images per class")
    parser.add_argument("--query", type=int, help="queries per class")
    parser.add_argument("--episodes", type=int, help="episode count")


def config_from_options(options):
    overrides = {name: options.get(name) for name in OVERRIDES}
    try:
        return resolve_config(options.get("config"), overrides=overrides)
    except ConfigError as e:
        raise CommandError(f"Invalid configuration: {e}")
