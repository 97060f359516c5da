"""CLI entrypoint."""

from __future__ import annotations

import logging
import os
import sys
import warnings

from pathlib import Path
from typing import TYPE_CHECKING

from conditioned_walk import subcommands

from .arg_parser import parse
from .config import Config
from .exceptions import CapReachedError, ConfigError, NumericalError
from .output import LibraryHandler, Output
from .utils import TermFeatures


if TYPE_CHECKING:
    from argparse import Namespace

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CAP_REACHED = 4


class Cli:
    """The Cli class."""

    def __init__(self) -> None:
        """Initialize the CLI and parse CLI args."""
        self.args: Namespace
        self.config: Config
        self.output: Output
        self.term_features: TermFeatures

    def parse_args(self) -> None:
        """Parse the command line arguments."""
        self.args = parse()
        if hasattr(self.args, "config"):
            self.args.config = Path(self.args.config).expanduser().resolve()

    def init_output(self) -> None:
        """Initialize the output object."""
        if not sys.stdout.isatty():
            self.term_features = TermFeatures(color=False, ansi=False)
        else:
            self.term_features = TermFeatures(
                color=False if os.environ.get("NO_COLOR") else not self.args.no_ansi,
                ansi=not self.args.no_ansi,
            )

        self.output = Output(
            log_append=self.args.log_append,
            log_file=self.args.log_file,
            log_level=self.args.log_level,
            term_features=self.term_features,
            verbosity=self.args.verbose,
        )
        logger = logging.getLogger("conditioned_walk")
        if not any(isinstance(handler, LibraryHandler) for handler in logger.handlers):
            logger.addHandler(LibraryHandler(self.output))

    def args_sanity(self) -> None:
        """Perform some sanity checking on the args."""
        if hasattr(self.args, "config") and not self.args.config.exists():
            err = f"Configuration file not found: {self.args.config}"
            self.output.critical(err, exit_code=EXIT_CONFIG)

    def run(self) -> None:
        """Run the application."""
        try:
            self.config = Config(
                args=self.args,
                output=self.output,
                term_features=self.term_features,
            )
            self.config.init()

            name = "".join(part.capitalize() for part in self.args.subcommand.split("-"))
            subcommand_cls = getattr(subcommands, name)
            subcommand = subcommand_cls(config=self.config, output=self.output)
            subcommand.run()
        except ConfigError as exc:
            self.output.critical(str(exc), exit_code=EXIT_CONFIG)
        except CapReachedError as exc:
            self.output.warning(str(exc))
            sys.exit(EXIT_CAP_REACHED)
        except NumericalError as exc:
            self.output.critical(str(exc), exit_code=EXIT_NUMERICAL)
        except OSError as exc:
            self.output.critical(f"{exc.filename or ''}: {exc.strerror}".lstrip(": "))
        self._exit()

    def _exit(self) -> None:
        """Exit the application setting the return code."""
        if self.output.call_count["error"]:
            sys.exit(1)
        sys.exit(0)


def main(*, dry: bool = False) -> None:
    """Entry point for the cwalk CLI.

    Args:
        dry: Skip main execution, used internally for testing.
    """
    with warnings.catch_warnings(record=True) as warns:
        warnings.simplefilter(action="default")
        cli = Cli()
        cli.parse_args()
        cli.init_output()
    for warn in warns:
        cli.output.warning(str(warn.message))
    warnings.resetwarnings()
    cli.args_sanity()
    if not dry:
        cli.run()
