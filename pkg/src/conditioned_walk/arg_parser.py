"""Parse the command line arguments."""

from __future__ import annotations

import argparse
import logging

from argparse import HelpFormatter
from pathlib import Path
from typing import TYPE_CHECKING

from .accuracy import BlockSource
from .config import PRESETS
from .models import MODEL_NAMES
from .oracles import Quantile
from .run_density import BetaForm, FirstStep, Inversion, MeanAnchor, NormalizingMethod
from .sampler import Kernel


logger = logging.getLogger(__name__)

if TYPE_CHECKING:
    from typing import Any

try:
    from ._version import version as __version__  # type: ignore[unused-ignore,import-not-found]
except ImportError:  # pragma: no cover
    try:
        from importlib.metadata import version

        __version__ = version("conditioned-walk")
    except Exception:  # pylint: disable=broad-except # noqa: BLE001
        # this is the fallback SemVer version picked by setuptools_scm when tag
        # information is not available.
        __version__ = "0.1.dev1"

SUPPRESS = argparse.SUPPRESS


def _values(enum_type: Any) -> list[str]:  # noqa: ANN401
    return [member.value for member in enum_type]


def common_args(parser: ArgumentParser) -> None:
    """Add common arguments to the parser.

    Args:
        parser: The parser to add the arguments to
    """
    parser.add_argument(
        "--lf",
        "--log-file <file>",
        dest="log_file",
        default=str(Path.cwd() / "conditioned-walk.log"),
        help="Log file to write to.",
    )
    parser.add_argument(
        "--ll",
        "--log-level <level>",
        dest="log_level",
        default="notset",
        choices=["notset", "debug", "info", "warning", "error", "critical"],
        help="Log level for file output.",
    )
    parser.add_argument(
        "--la",
        "--log-append <bool>",
        dest="log_append",
        choices=["true", "false"],
        default="true",
        help="Append to log file.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Give more CLI output. Option is additive, and can be used up to 3 times.",
    )


def run_args(parser: ArgumentParser) -> None:
    """Add the model and run arguments shared by every command.

    Values left unset fall back to the configuration file, then the preset,
    then the built-in defaults, so none of these carry an argparse default.

    Args:
        parser: The parser to add the arguments to
    """
    parser.add_argument(
        "--config <file>",
        dest="config",
        default=SUPPRESS,
        help="YAML configuration file or run manifest to start from.",
    )
    parser.add_argument(
        "--preset <name>",
        dest="preset",
        default=SUPPRESS,
        choices=list(PRESETS),
        help="Named experiment setup.",
    )
    parser.add_argument(
        "--na",
        "--no-ansi",
        action="store_true",
        default=False,
        dest="no_ansi",
        help="Disable the use of ANSI codes for terminal hyperlink generation and color.",
    )
    parser.add_argument(
        "--model <name>",
        dest="model",
        default=SUPPRESS,
        choices=list(MODEL_NAMES),
        help="Source law of the increments, normal by default.",
    )
    parser.add_argument(
        "--f",
        metavar="<name>",
        dest="f",
        default=SUPPRESS,
        choices=["id", "square"],
        help="Function whose mean is conditioned, id by default.",
    )
    parser.add_argument(
        "--n",
        metavar="<int>",
        dest="n",
        type=int,
        default=SUPPRESS,
        help="Walk length, 100 by default.",
    )
    parser.add_argument(
        "--k",
        metavar="<int>",
        dest="k",
        type=int,
        default=SUPPRESS,
        help="Run length, 90 by default.",
    )
    level = parser.add_mutually_exclusive_group()
    level.add_argument(
        "--a",
        metavar="<float>",
        dest="a",
        type=float,
        default=SUPPRESS,
        help="Level of the mean in standard deviations.",
    )
    level.add_argument(
        "--pvalue <float>",
        dest="pvalue",
        type=float,
        default=SUPPRESS,
        help="Tail probability that sets the level, 0.01 by default.",
    )
    parser.add_argument(
        "--quantile <rule>",
        dest="quantile",
        default=SUPPRESS,
        choices=_values(Quantile),
        help="How the tail probability becomes a level, gaussian by default.",
    )
    parser.add_argument(
        "--anchor <name>",
        dest="anchor",
        default=SUPPRESS,
        choices=_values(MeanAnchor),
        help="Center of the Gaussian factor of each step, mi by default.",
    )
    parser.add_argument(
        "--first-step <name>",
        dest="first_step",
        default=SUPPRESS,
        choices=_values(FirstStep),
        help="Density of the first increment, product by default.",
    )
    parser.add_argument(
        "--inversion <name>",
        dest="inversion",
        default=SUPPRESS,
        choices=_values(Inversion),
        help="How each tilt is found, exact by default.",
    )
    parser.add_argument(
        "--refresh <int>",
        dest="refresh",
        default=SUPPRESS,
        type=int,
        help="Steps between exact re-solves of incremental tilts, 0 for never, 5 by default.",
    )
    parser.add_argument(
        "--beta-form <name>",
        dest="beta_form",
        default=SUPPRESS,
        choices=_values(BetaForm),
        help="Skewness correction of the step center, s4 by default.",
    )
    parser.add_argument(
        "--normalizing <method>",
        dest="normalizing",
        default=SUPPRESS,
        choices=_values(NormalizingMethod),
        help="How step normalizing constants are computed, auto by default.",
    )
    parser.add_argument(
        "--mc-budget <int>",
        dest="mc_budget",
        type=int,
        default=SUPPRESS,
        help="Monte Carlo draws per normalizing constant, 100000 by default.",
    )
    parser.add_argument(
        "--kernel <name>",
        dest="kernel",
        default=SUPPRESS,
        choices=_values(Kernel),
        help="Step sampler, auto by default.",
    )
    parser.add_argument(
        "--mh-burn-in <int>",
        dest="mh_burn_in",
        type=int,
        default=SUPPRESS,
        help="Metropolis-Hastings burn-in per step, 200 by default.",
    )
    parser.add_argument(
        "--mh-scale <float>",
        dest="mh_scale",
        type=float,
        default=SUPPRESS,
        help="Metropolis-Hastings proposal scale, the step spread by default.",
    )
    parser.add_argument(
        "--retries <int>",
        dest="retries",
        type=int,
        default=SUPPRESS,
        help="Redraws of a run that leaves the attainable range, 10 by default.",
    )
    parser.add_argument(
        "--workers <int>",
        dest="workers",
        type=int,
        default=SUPPRESS,
        help="Worker processes for bundles, 1 by default.",
    )
    parser.add_argument(
        "--seed <int>",
        dest="seed",
        type=int,
        default=SUPPRESS,
        help="Root seed of every random stream, 0 by default.",
    )
    parser.add_argument(
        "--out <directory>",
        dest="out",
        default=SUPPRESS,
        help="Directory for data, figures and the manifest, cwalk-out by default.",
    )
    parser.add_argument(
        "--plot",
        dest="plot",
        action=argparse.BooleanOptionalAction,
        default=SUPPRESS,
        help="Write SVG figures next to the data, off by default.",
    )


def _block_source(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--block-source <law>",
        dest="block_source",
        default=SUPPRESS,
        choices=_values(BlockSource),
        help="Law the replicated blocks are drawn from, p_x by default.",
    )
    parser.add_argument(
        "--L <int>",
        dest="L",
        type=int,
        default=SUPPRESS,
        help="Number of replicated blocks, 1000 by default.",
    )


def _stride(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--stride <int>",
        dest="stride",
        type=int,
        default=SUPPRESS,
        help="Step of the run length grid, about n / 100 by default.",
    )


def parse(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse the command line arguments.

    Args:
        argv: Arguments to parse, sys.argv[1:] by default

    Returns:
        The arguments
    """
    parser = ArgumentParser(
        description=(
            "Sample long runs of a random walk conditioned on a large deviation of its mean."
        ),
        formatter_class=CustomHelpFormatter,
    )

    common_args(parser)

    parser.add_argument(
        "-V",
        "--version",
        action="version",
        help="Show version and exit.",
        version=__version__,
    )

    subparsers = parser.add_subparsers(
        title="Commands",
        dest="subcommand",
        metavar="",
        required=True,
    )

    level1 = ArgumentParser(add_help=False)
    run_args(level1)
    common_args(level1)

    sample = subparsers.add_parser(
        "sample",
        formatter_class=CustomHelpFormatter,
        parents=[level1],
        help="Sample a bundle of runs",
    )
    sample.add_argument(
        "--paths <int>",
        dest="paths",
        type=int,
        default=SUPPRESS,
        help="Number of runs, 5 by default.",
    )

    hist = subparsers.add_parser(
        "hist",
        formatter_class=CustomHelpFormatter,
        parents=[level1],
        help="Histogram of sampled increments against the tilted density",
    )
    hist.add_argument(
        "--paths <int>",
        dest="paths",
        type=int,
        default=SUPPRESS,
        help="Number of runs to pool, 5 by default.",
    )
    hist.add_argument(
        "--bins <int>",
        dest="bins",
        type=int,
        default=SUPPRESS,
        help="Number of histogram bins, 50 by default.",
    )

    accuracy = subparsers.add_parser(
        "accuracy",
        formatter_class=CustomHelpFormatter,
        parents=[level1],
        help="Relative error curve over run lengths",
    )
    _block_source(accuracy)
    accuracy.add_argument(
        "--k-values <int>",
        dest="k_values",
        type=int,
        nargs="+",
        default=SUPPRESS,
        help="Run lengths to evaluate, a grid up to k by default.",
    )
    _stride(accuracy)

    select = subparsers.add_parser(
        "select-k",
        formatter_class=CustomHelpFormatter,
        parents=[level1],
        help="Longest run length certified for an error budget",
    )
    _block_source(select)
    select.add_argument(
        "--delta <float>",
        dest="delta",
        type=float,
        default=SUPPRESS,
        help="Relative error budget, 0.05 by default.",
    )
    _stride(select)

    _validate = subparsers.add_parser(
        "validate",
        formatter_class=CustomHelpFormatter,
        parents=[level1],
        help="Check the samplers and densities against exact results",
    )

    _group_titles(parser)
    for subparser in subparsers.choices.values():
        _group_titles(subparser)

    return parser.parse_args(argv)


def _group_titles(parser: ArgumentParser) -> None:
    """Set the group titles to be capitalized.

    Args:
        parser: The parser to set the group titles for
    """
    for group in parser._action_groups:  # noqa: SLF001
        if group.title is None:
            continue
        group.title = group.title.capitalize()


class ArgumentParser(argparse.ArgumentParser):
    """A custom argument parser."""

    def add_argument(  # type: ignore[override]
        self,
        *args: Any,  # noqa: ANN401
        **kwargs: Any,  # noqa: ANN401
    ) -> None:
        """Add an argument.

        Args:
            *args: The arguments
            **kwargs: The keyword arguments
        """
        if "choices" in kwargs:
            kwargs["help"] += f" (choices: {', '.join(kwargs['choices'])})"
        if "default" in kwargs and kwargs["default"] != SUPPRESS:
            kwargs["help"] += f" (default: {kwargs['default']})"
        kwargs["help"] = kwargs["help"][0].upper() + kwargs["help"][1:]
        super().add_argument(*args, **kwargs)


class CustomHelpFormatter(HelpFormatter):
    """A custom help formatter."""

    def __init__(self, prog: str) -> None:
        """Initialize the help formatter.

        Args:
            prog: The program name
        """
        long_string = "--abc  --really_really_really_log"
        # 3 here accounts for the spaces in the ljust(6) below
        HelpFormatter.__init__(
            self,
            prog=prog,
            indent_increment=1,
            max_help_position=len(long_string) + 3,
        )

    def _format_action_invocation(
        self,
        action: argparse.Action,
    ) -> str:
        """Format the action invocation.

        Args:
            action: The action to format

        Raises:
            ValueError: If more than 2 options are given

        Returns:
            The formatted action invocation
        """
        if not action.option_strings:
            default = self._get_default_metavar_for_positional(action)
            (metavar,) = self._metavar_formatter(action, default)(1)
            return metavar

        if len(action.option_strings) == 1:
            return action.option_strings[0]

        max_variations = 2
        if len(action.option_strings) == max_variations:
            # Account for a --1234 --long-option-name
            return f"{action.option_strings[0].ljust(6)} {action.option_strings[1]}"
        msg = "Too many option strings"
        raise ValueError(msg)
