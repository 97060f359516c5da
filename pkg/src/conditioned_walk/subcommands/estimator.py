"""Estimate the relative error curve over run lengths."""

from __future__ import annotations

from typing import TYPE_CHECKING

from conditioned_walk.accuracy import BlockSource, accuracy_curve, k_grid
from conditioned_walk.arg_parser import __version__
from conditioned_walk.artifacts import (
    plot_accuracy,
    run_manifest,
    write_accuracy_csv,
    write_manifest,
)
from conditioned_walk.oracles import has_oracle, oracle_accuracy_curve
from conditioned_walk.utils import Spinner


if TYPE_CHECKING:
    from conditioned_walk.accuracy import AccuracyReport
    from conditioned_walk.config import Config
    from conditioned_walk.output import Output


def report_table(reports: list[AccuracyReport]) -> list[list[str]]:
    """Format a curve for the console.

    Args:
        reports: The curve

    Returns:
        Rows of k, ERE, VRE and the error interval
    """
    return [
        [
            str(report.k),
            f"{report.ere_bar:.4g}",
            f"{report.vre_bar:.4g}",
            f"[{report.ci_lo:.4g}, {report.ci_hi:.4g}]",
            f"{report.drop_rate:.2%}",
        ]
        for report in reports
    ]


TABLE_HEADERS = ["k", "ERE", "VRE", "interval", "dropped"]


class Estimator:
    """The Estimator class."""

    def __init__(self, config: Config, output: Output) -> None:
        """Initialize the Estimator.

        Args:
            config: The application configuration.
            output: The application output object.
        """
        self._config = config
        self._output = output

    def run(self) -> None:
        """Run the Estimator."""
        experiment = self._config.experiment
        settings = experiment.accuracy
        spec = self._config.spec
        options = experiment.sampler_options()
        ks = settings.k_values or k_grid(spec.n, spec.k, settings.stride)

        features = self._config.term_features
        with Spinner(message=f"Estimating {len(ks)} run lengths", term_features=features):
            reports = accuracy_curve(
                spec,
                ks,
                settings.L,
                source=BlockSource(settings.block_source),
                options=options,
            )

        out = self._config.out_dir
        write_accuracy_csv(out / "accuracy.csv", reports)
        exact = None
        if has_oracle(spec):
            with Spinner(message="Estimating the exact curve", term_features=features):
                exact = oracle_accuracy_curve(spec, ks, settings.L, options)
            write_accuracy_csv(out / "accuracy_exact.csv", exact)
        if experiment.output.plot:
            plot_accuracy(out / "accuracy.svg", reports, exact, settings.delta)

        self._output.table(TABLE_HEADERS, report_table(reports))
        negative = [report.k for report in reports if report.negative_variance]
        if negative:
            self._output.warning(f"Negative variance estimates at k={negative}.")
            self._output.hint(f"Rerun with more blocks than --L {settings.L}.")
        results = {
            "ks": [report.k for report in reports],
            "max_drop_rate": max(report.drop_rate for report in reports),
            "exact_curve": exact is not None,
        }
        write_manifest(
            out / "manifest.yml",
            run_manifest(
                "accuracy",
                __version__,
                experiment.to_dict(),
                {"a": spec.a, "level": spec.level, "k": spec.k},
                results,
            ),
        )
        self._output.note(f"Wrote the accuracy curve over {len(reports)} run lengths to {out}")
