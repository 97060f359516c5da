"""Pool the increments of a bundle and compare them with the tilted density."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from conditioned_walk.arg_parser import __version__
from conditioned_walk.artifacts import (
    histogram,
    plot_histogram,
    run_manifest,
    write_histogram_csv,
    write_manifest,
)
from conditioned_walk.sampler import marginal_fit, sample_paths, tilted_reference
from conditioned_walk.utils import Spinner


if TYPE_CHECKING:
    from conditioned_walk.config import Config
    from conditioned_walk.output import Output


class Histogrammer:
    """The Histogrammer class."""

    def __init__(self, config: Config, output: Output) -> None:
        """Initialize the Histogrammer.

        Args:
            config: The application configuration.
            output: The application output object.
        """
        self._config = config
        self._output = output

    def run(self) -> None:
        """Run the Histogrammer."""
        experiment = self._config.experiment
        spec = self._config.spec

        with Spinner(message="Sampling runs to pool", term_features=self._config.term_features):
            paths = sample_paths(spec, experiment.sampler.paths, experiment.sampler_options())

        pooled = np.concatenate([path.values for path in paths])
        hist = histogram(pooled, experiment.output.bins, lambda x: tilted_reference(spec, x))
        fit = marginal_fit(spec, paths)

        out = self._config.out_dir
        write_histogram_csv(out / "histogram.csv", hist)
        if experiment.output.plot:
            plot_histogram(out / "histogram.svg", hist)

        if np.isnan(fit.statistic):
            self._output.info("No closed form tilted CDF for this model, skipping the KS test.")
        else:
            self._output.note(
                f"KS distance {fit.statistic:.4f} (p-value {fit.pvalue:.3g})"
                f" over {fit.count} values",
            )
        write_manifest(
            out / "manifest.yml",
            run_manifest(
                "hist",
                __version__,
                experiment.to_dict(),
                {"a": spec.a, "level": spec.level, "k": spec.k, "tilt": fit.tilt},
                {"ks_statistic": fit.statistic, "ks_pvalue": fit.pvalue, "count": fit.count},
            ),
        )
        self._output.note(f"Wrote the histogram of {fit.count} increments to {out}")
