"""Select the longest run length certified for an error budget."""

from __future__ import annotations

from typing import TYPE_CHECKING

from conditioned_walk.accuracy import BlockSource, select_k
from conditioned_walk.arg_parser import __version__
from conditioned_walk.artifacts import (
    plot_accuracy,
    run_manifest,
    write_accuracy_csv,
    write_manifest,
)
from conditioned_walk.exceptions import CapReachedError
from conditioned_walk.utils import Spinner

from .estimator import TABLE_HEADERS, report_table


if TYPE_CHECKING:
    from conditioned_walk.config import Config
    from conditioned_walk.output import Output


class Selector:
    """The Selector class."""

    def __init__(self, config: Config, output: Output) -> None:
        """Initialize the Selector.

        Args:
            config: The application configuration.
            output: The application output object.
        """
        self._config = config
        self._output = output

    def run(self) -> None:
        """Run the Selector.

        Raises:
            CapReachedError: If delta never enters an error interval
        """
        experiment = self._config.experiment
        settings = experiment.accuracy
        spec = self._config.spec

        with Spinner(message="Scanning run lengths", term_features=self._config.term_features):
            result = select_k(
                spec,
                settings.delta,
                settings.L,
                stride=settings.stride,
                source=BlockSource(settings.block_source),
                options=experiment.sampler_options(),
            )

        out = self._config.out_dir
        write_accuracy_csv(out / "select_k.csv", result.reports)
        if experiment.output.plot:
            plot_accuracy(out / "select_k.svg", result.reports, delta=result.delta)
        self._output.debug("\n".join(" ".join(row) for row in report_table(result.reports)))
        selected = [report for report in result.reports if report.k == result.k_delta]
        self._output.table(TABLE_HEADERS, report_table(selected))

        results = {
            "delta": result.delta,
            "k_delta": result.k_delta,
            "cap_reached": result.cap_reached,
            "last_exit": result.last_exit,
        }
        if result.regime is not None:
            results["regime"] = {check.name: check.flag for check in result.regime.checks}
        write_manifest(
            out / "manifest.yml",
            run_manifest(
                "select-k",
                __version__,
                experiment.to_dict(),
                {"a": spec.a, "level": spec.level},
                results,
            ),
        )
        if result.cap_reached:
            msg = (
                f"delta={result.delta} never entered an error interval up to k={result.k_delta}; "
                "the cap n - 2 was reached."
            )
            raise CapReachedError(msg)
        print(f"k_delta={result.k_delta}")  # noqa: T201
        self._output.note(
            f"Selected k={result.k_delta} for delta={result.delta}, trace written to {out}",
        )
