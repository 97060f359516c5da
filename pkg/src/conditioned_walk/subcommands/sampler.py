"""Sample a bundle of runs."""

from __future__ import annotations

from typing import TYPE_CHECKING

from conditioned_walk.arg_parser import __version__
from conditioned_walk.artifacts import (
    plot_paths,
    run_manifest,
    write_manifest,
    write_oracle_csv,
    write_paths_csv,
    write_trace,
)
from conditioned_walk.oracles import has_oracle, oracle_relative_error
from conditioned_walk.sampler import path_diagnostics, sample_paths
from conditioned_walk.tilted_family import check_regime
from conditioned_walk.utils import Spinner


if TYPE_CHECKING:
    from conditioned_walk.config import Config
    from conditioned_walk.output import Output


class Sampler:
    """The Sampler class."""

    def __init__(self, config: Config, output: Output) -> None:
        """Initialize the Sampler.

        Args:
            config: The application configuration.
            output: The application output object.
        """
        self._config = config
        self._output = output

    def run(self) -> None:
        """Run the Sampler."""
        experiment = self._config.experiment
        spec = self._config.spec
        count = experiment.sampler.paths

        for check in check_regime(spec.n, spec.k, spec.a).checks:
            if not check.ok:
                self._output.note(
                    f"Regime check {check.name} = {check.value:.3g}: {check.description}.",
                )

        with Spinner(message=f"Sampling {count} runs", term_features=self._config.term_features):
            paths = sample_paths(spec, count, experiment.sampler_options())

        out = self._config.out_dir
        write_paths_csv(out / "paths.csv", paths)
        write_trace(out / "paths.cwtrace", paths, n=spec.n, a=spec.a, seed=spec.seed)

        diagnostics = path_diagnostics(spec, paths)
        results = {
            "paths": count,
            "mean_y1": diagnostics.mean_y1,
            "mean_y1_y2": diagnostics.mean_y1_y2,
            "mean_y1_sq": diagnostics.mean_y1_sq,
            "expected_y1_sq": diagnostics.expected_y1_sq,
            "max_over_log_k": diagnostics.max_over_log_k,
            "drift_within_5": diagnostics.drift_within(),
            "retry_rate": diagnostics.retry_rate,
        }
        if has_oracle(spec):
            summary = oracle_relative_error(spec, paths)
            write_oracle_csv(out / "oracle.csv", summary)
            results["oracle_max_abs_rel_error"] = summary.max_abs
            results["oracle_mean_abs_rel_error"] = summary.mean_abs
        if experiment.output.plot:
            plot_paths(out / "paths.svg", paths, spec.level)

        self._output.table(
            ["statistic", "value", "reference"],
            [
                ["E[Y_1]", f"{diagnostics.mean_y1:.4g}", f"{diagnostics.level:.4g}"],
                ["E[Y_1 Y_2]", f"{diagnostics.mean_y1_y2:.4g}", f"{diagnostics.level**2:.4g}"],
                ["E[Y_1^2]", f"{diagnostics.mean_y1_sq:.4g}", f"{diagnostics.expected_y1_sq:.4g}"],
                ["max y / log k", f"{diagnostics.max_over_log_k:.4g}", ""],
            ],
        )
        write_manifest(
            out / "manifest.yml",
            run_manifest(
                "sample",
                __version__,
                experiment.to_dict(),
                {"a": spec.a, "level": spec.level, "k": spec.k},
                results,
            ),
        )
        self._output.note(f"Wrote {count} runs of length {spec.k} to {out}")
