"""Thin re-export layer for the curvlab subcommand handlers."""

from handlers.commands_atlas import cmd_atlas
from handlers.commands_blowup import cmd_blowup, run_blowup
from handlers.commands_flow import cmd_flow
from handlers.commands_monotone import cmd_monotone
from handlers.commands_utils import EXIT_FAIL, EXIT_OK, EXIT_USAGE, UsageError
from handlers.commands_verify import cmd_verify

__all__ = [
    "EXIT_FAIL",
    "EXIT_OK",
    "EXIT_USAGE",
    "UsageError",
    "cmd_atlas",
    "cmd_blowup",
    "cmd_flow",
    "cmd_monotone",
    "cmd_verify",
    "run_blowup",
]
