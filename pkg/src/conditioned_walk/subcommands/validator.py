"""Check the samplers and densities against exact results."""

from __future__ import annotations

import math

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from scipy import integrate, stats

from conditioned_walk.accuracy import saddlepoint_log_density
from conditioned_walk.arg_parser import __version__
from conditioned_walk.artifacts import run_manifest, write_manifest
from conditioned_walk.models import CenteredExponentialModel, NormalModel
from conditioned_walk.oracles import (
    exponential_conditional_log_density,
    gaussian_conditional_log_density,
    oracle_relative_error,
)
from conditioned_walk.run_density import (
    NormalizingMethod,
    RunSpec,
    step_densities,
    step_log_density,
)
from conditioned_walk.sampler import sample_paths, sample_step_rejection
from conditioned_walk.utils import Spinner, Stream, substream


if TYPE_CHECKING:
    from collections.abc import Callable

    from conditioned_walk.config import Config
    from conditioned_walk.output import Output


@dataclass(frozen=True)
class ValidationCheck:
    """The outcome of one check.

    Attributes:
        name: Short identifier
        value: The measured discrepancy
        tolerance: Largest accepted discrepancy
        description: What was compared
    """

    name: str
    value: float
    tolerance: float
    description: str

    @property
    def passed(self) -> bool:
        """Whether the discrepancy is within tolerance."""
        return math.isfinite(self.value) and self.value <= self.tolerance


def gaussian_exactness(seed: int) -> ValidationCheck:
    """Compare sampled normal runs with the exact conditional density.

    Args:
        seed: The root seed

    Returns:
        The largest absolute log density difference
    """
    spec = RunSpec(n=100, k=90, a=0.3, model=NormalModel(), seed=seed)
    summary = oracle_relative_error(spec, sample_paths(spec, 20))
    return ValidationCheck(
        name="gaussian-exactness",
        value=summary.max_abs_log_difference,
        tolerance=1e-8,
        description="normal product density against the exact conditional density",
    )


def saddlepoint_accuracy() -> ValidationCheck:
    """Compare the saddlepoint density of an exponential mean with the Gamma density.

    Returns:
        The absolute relative error at n = 50
    """
    n = 50
    u = 0.3
    exact = math.log(n) + float(stats.gamma.logpdf(n * (1.0 + u), n))
    approx = saddlepoint_log_density(CenteredExponentialModel(), n, u)
    return ValidationCheck(
        name="saddlepoint",
        value=abs(math.expm1(approx - exact)),
        tolerance=5e-3,
        description="saddlepoint density of a centered exponential mean against the Gamma density",
    )


def rejection_recovery(seed: int, draws: int = 2000) -> ValidationCheck:
    """Recover a known product of normal densities with the rejection kernel.

    The density proportional to n(0, 1, y) n(0.5, 1, y) is N(0.25, 0.5).

    Args:
        seed: The root seed
        draws: Number of draws

    Returns:
        The Kolmogorov-Smirnov distance, tolerated up to its 0.1% critical value
    """
    rng = substream(seed, Stream.VALIDATE, 0)
    model = NormalModel()
    values = np.array([sample_step_rejection(model, 0.5, 1.0, rng)[0] for _ in range(draws)])
    result = stats.kstest(values, stats.norm(loc=0.25, scale=math.sqrt(0.5)).cdf)
    return ValidationCheck(
        name="rejection-recovery",
        value=float(result.statistic),
        tolerance=1.95 / math.sqrt(draws),
        description="rejection kernel draws against N(0.25, 0.5)",
    )


def _total_mass(log_density: Callable[[float], float], lower: float, upper: float) -> float:
    total, _ = integrate.quad(lambda y: math.exp(log_density(y)), lower, upper, limit=200)
    return float(total)


def step_normalization(seed: int) -> ValidationCheck:
    """Integrate one step density of a centered exponential run.

    Args:
        seed: The root seed

    Returns:
        The distance of the total mass from one
    """
    model = CenteredExponentialModel()
    spec = RunSpec(
        n=100,
        k=10,
        a=0.2,
        model=model,
        seed=seed,
        normalizing=NormalizingMethod.QUADRATURE,
    )
    step = step_densities(spec, np.full(spec.k, spec.level))[3]
    mass = _total_mass(lambda y: float(step_log_density(step, model, spec, y)), -1.0, 60.0)
    return ValidationCheck(
        name="step-normalization",
        value=abs(mass - 1.0),
        tolerance=1e-6,
        description="mass of a normalized step density",
    )


def oracle_normalization() -> ValidationCheck:
    """Integrate the exact one step conditional densities.

    Returns:
        The larger distance of the two total masses from one
    """
    n, a = 20, 0.2
    exponential = _total_mass(
        lambda y: float(exponential_conditional_log_density(n, 1, a, [y])),
        -1.0,
        n * a + n - 1.0,
    )
    gaussian = _total_mass(
        lambda y: float(gaussian_conditional_log_density(n, 1, a, [y])),
        -math.inf,
        math.inf,
    )
    return ValidationCheck(
        name="oracle-normalization",
        value=max(abs(exponential - 1.0), abs(gaussian - 1.0)),
        tolerance=1e-8,
        description="mass of the exact conditional densities of one increment",
    )


def run_checks(seed: int) -> list[ValidationCheck]:
    """Run every check.

    Args:
        seed: The root seed

    Returns:
        The outcomes
    """
    return [
        gaussian_exactness(seed),
        saddlepoint_accuracy(),
        rejection_recovery(seed),
        step_normalization(seed),
        oracle_normalization(),
    ]


class Validator:
    """The Validator class."""

    def __init__(self, config: Config, output: Output) -> None:
        """Initialize the Validator.

        Args:
            config: The application configuration.
            output: The application output object.
        """
        self._config = config
        self._output = output

    def run(self) -> None:
        """Run the Validator."""
        experiment = self._config.experiment
        with Spinner(message="Running checks", term_features=self._config.term_features):
            checks = run_checks(experiment.run.seed)

        self._output.table(
            ["check", "value", "tolerance", "result"],
            [
                [
                    check.name,
                    f"{check.value:.3g}",
                    f"{check.tolerance:.3g}",
                    "PASS" if check.passed else "FAIL",
                ]
                for check in checks
            ],
        )
        for check in checks:
            if not check.passed:
                self._output.error(f"Check {check.name} failed: {check.description}.")

        out = self._config.out_dir
        write_manifest(
            out / "manifest.yml",
            run_manifest(
                "validate",
                __version__,
                experiment.to_dict(),
                {},
                {check.name: {"value": check.value, "passed": check.passed} for check in checks},
            ),
        )
