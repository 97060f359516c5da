"""Test the sampler module."""

from __future__ import annotations

import math

from dataclasses import replace

import numpy as np
import pytest

from scipy import integrate, stats

from conditioned_walk.exceptions import ConfigError
from conditioned_walk.models import CenteredExponentialModel, NormalModel, NormalSquareModel
from conditioned_walk.run_density import FirstStep, RunSpec, path_log_density, step_params
from conditioned_walk.sampler import (
    Kernel,
    SamplerOptions,
    marginal_fit,
    path_diagnostics,
    sample_initial,
    sample_paths,
    sample_step_mh,
    sample_step_rejection,
    sample_step_tilted,
    tilted_reference,
)
from conditioned_walk.utils import Stream


def _normal_step_law(spec: RunSpec, i: int, partial: float) -> tuple[float, float]:
    """Return the exact mean and variance of a normal step."""
    step = step_params(spec, i, partial)
    return step.center / (1.0 + step.alpha), step.alpha / (1.0 + step.alpha)


def test_rejection_recovers_product() -> None:
    """Test the rejection kernel draws N(0.25, 0.5) from n(0, 1) n(0.5, 1)."""
    rng = np.random.default_rng(21)
    model = NormalModel()
    draws = np.array([sample_step_rejection(model, 0.5, 1.0, rng)[0] for _ in range(3000)])
    result = stats.kstest(draws, stats.norm(loc=0.25, scale=math.sqrt(0.5)).cdf)
    assert result.pvalue > 1e-3


def test_rejection_needs_identity() -> None:
    """Test the rejection kernel refuses a squared conditioning function."""
    with pytest.raises(ConfigError, match="Rejection sampling"):
        sample_step_rejection(NormalSquareModel(), 0.0, 1.0, np.random.default_rng(0))


def test_tilted_kernel_matches_step(normal_spec: RunSpec) -> None:
    """Test the tilted envelope kernel against the exact normal step law.

    Args:
        normal_spec: A normal run
    """
    rng = np.random.default_rng(3)
    step = step_params(normal_spec, 5, 2.0)
    mean, variance = _normal_step_law(normal_spec, 5, 2.0)
    draws = np.array([sample_step_tilted(normal_spec.model, step, rng)[0] for _ in range(3000)])
    result = stats.kstest(draws, stats.norm(loc=mean, scale=math.sqrt(variance)).cdf)
    assert result.pvalue > 1e-3


def test_mh_kernel_matches_step(normal_spec: RunSpec) -> None:
    """Test parallel MH chains against the exact normal step law.

    Args:
        normal_spec: A normal run
    """
    rng = np.random.default_rng(4)
    step = step_params(normal_spec, 2, -1.0)
    mean, variance = _normal_step_law(normal_spec, 2, -1.0)
    draws = sample_step_mh(normal_spec.model, step, normal_spec, rng, burn_in=300, size=4000)
    assert isinstance(draws, np.ndarray)
    assert float(np.mean(draws)) == pytest.approx(mean, abs=0.05)
    assert float(np.var(draws)) == pytest.approx(variance, rel=0.1)


def test_sample_initial_on_support() -> None:
    """Test the first increment of an exponential run stays on the support."""
    rng = np.random.default_rng(9)
    draws = [sample_initial(CenteredExponentialModel(), 0.2, rng) for _ in range(200)]
    assert min(draws) > -1.0


@pytest.mark.parametrize(
    ("kernel", "model", "expected"),
    (
        (Kernel.AUTO, NormalModel(), Kernel.TILTED),
        (Kernel.AUTO, NormalSquareModel(), Kernel.TILTED),
        (Kernel.REJECTION, NormalModel(), Kernel.REJECTION),
        (Kernel.MH, CenteredExponentialModel(), Kernel.MH),
    ),
    ids=("auto-normal", "auto-square", "rejection", "mh"),
)
def test_resolve_kernel(kernel: Kernel, model: object, expected: Kernel) -> None:
    """Test kernel selection.

    Args:
        kernel: The requested kernel
        model: The source model
        expected: The kernel in use
    """
    assert SamplerOptions(kernel=kernel).resolve(model) is expected  # type: ignore[arg-type]


def test_resolve_rejection_square() -> None:
    """Test the rejection kernel cannot serve a squared conditioning function."""
    with pytest.raises(ConfigError, match="rejection kernel"):
        SamplerOptions(kernel=Kernel.REJECTION).resolve(NormalSquareModel())


@pytest.mark.parametrize(
    ("kwargs", "match"),
    (
        ({"mh_burn_in": 0}, "burn-in"),
        ({"mh_scale": 0.0}, "scale"),
        ({"retries": -1}, "retry"),
        ({"workers": 0}, "worker"),
    ),
    ids=("burn-in", "scale", "retries", "workers"),
)
def test_options_errors(kwargs: dict[str, float], match: str) -> None:
    """Test invalid sampler tuning.

    Args:
        kwargs: The options
        match: Expected error text
    """
    with pytest.raises(ConfigError, match=match):
        SamplerOptions(**kwargs)  # type: ignore[arg-type]


def test_sample_paths_reproducible(exponential_spec: RunSpec) -> None:
    """Test a bundle depends only on the seed.

    Args:
        exponential_spec: A centered exponential run
    """
    first = sample_paths(exponential_spec, 4)
    second = sample_paths(exponential_spec, 4)
    for left, right in zip(first, second, strict=True):
        np.testing.assert_array_equal(left.values, right.values)
    other = sample_paths(replace(exponential_spec, seed=exponential_spec.seed + 1), 4)
    assert not np.array_equal(first[0].values, other[0].values)


def test_sample_paths_prefix_stable(exponential_spec: RunSpec) -> None:
    """Test path j does not depend on how many paths are drawn.

    Args:
        exponential_spec: A centered exponential run
    """
    short = sample_paths(exponential_spec, 2)
    long = sample_paths(exponential_spec, 5)
    np.testing.assert_array_equal(short[1].values, long[1].values)


def test_sample_paths_workers(normal_spec: RunSpec) -> None:
    """Test worker processes give the same bundle.

    Args:
        normal_spec: A normal run
    """
    serial = sample_paths(normal_spec, 3)
    parallel = sample_paths(normal_spec, 3, SamplerOptions(workers=2))
    for left, right in zip(serial, parallel, strict=True):
        np.testing.assert_array_equal(left.values, right.values)


def test_path_sample_fields(exponential_spec: RunSpec) -> None:
    """Test the bookkeeping carried by a sampled run.

    Args:
        exponential_spec: A centered exponential run
    """
    (path,) = sample_paths(exponential_spec, 1)
    assert path.k == exponential_spec.k
    assert path.consistent(exponential_spec.model)
    assert path.log_density == pytest.approx(path_log_density(exponential_spec, path.values))
    assert path.seed_trace == (Stream.PATHS, 0)
    assert path.m_trace[0] == pytest.approx(exponential_spec.level)
    assert np.all(path.rejection_stats >= 1)
    assert np.all(path.values > -1.0)


@pytest.mark.parametrize(
    "kernel",
    (Kernel.REJECTION, Kernel.MH),
    ids=("rejection", "mh"),
)
def test_other_kernels_sample(normal_spec: RunSpec, kernel: Kernel) -> None:
    """Test whole runs with the rejection and MH kernels.

    Args:
        normal_spec: A normal run
        kernel: The kernel
    """
    options = SamplerOptions(kernel=kernel, mh_burn_in=50)
    paths = sample_paths(normal_spec, 2, options)
    assert all(np.all(np.isfinite(path.values)) for path in paths)
    assert all(math.isfinite(path.log_density) for path in paths)


def test_tilted_first_step_sample(exponential_spec: RunSpec) -> None:
    """Test runs whose first increment comes from the tilted law.

    Args:
        exponential_spec: A centered exponential run
    """
    spec = replace(exponential_spec, first_step=FirstStep.TILTED)
    (path,) = sample_paths(spec, 1)
    assert path.rejection_stats[0] == 1
    assert math.isfinite(path.log_density)


def test_sample_paths_count(normal_spec: RunSpec) -> None:
    """Test an empty bundle is refused.

    Args:
        normal_spec: A normal run
    """
    with pytest.raises(ConfigError, match="positive"):
        sample_paths(normal_spec, 0)


def test_path_diagnostics(normal_spec: RunSpec) -> None:
    """Test bundle statistics of a normal run.

    Args:
        normal_spec: A normal run
    """
    paths = sample_paths(normal_spec, 400)
    diagnostics = path_diagnostics(normal_spec, paths)
    assert diagnostics.paths == 400
    assert diagnostics.level == pytest.approx(normal_spec.a)
    assert diagnostics.mean_y1 == pytest.approx(normal_spec.a, abs=5.0 * diagnostics.mean_y1_stderr)
    assert diagnostics.expected_y1_sq == pytest.approx(1.0 + normal_spec.a**2)
    assert diagnostics.drift_ratio.shape == (400,)
    assert diagnostics.drift_within() >= 0.95
    assert diagnostics.max_over_log_k < 3.0
    assert diagnostics.retry_rate == 0.0
    with pytest.raises(ConfigError):
        path_diagnostics(normal_spec, [])
    fit = marginal_fit(normal_spec, paths)
    assert fit.count == 400 * normal_spec.k
    assert fit.statistic < 0.05


def test_marginal_fit(square_spec: RunSpec) -> None:
    """Test pooled increments conditioned on the mean of squares.

    Args:
        square_spec: A run conditioned on the mean of squares
    """
    paths = sample_paths(square_spec, 40)
    fit = marginal_fit(square_spec, paths)
    assert fit.count == 40 * square_spec.k
    assert fit.tilt == pytest.approx(0.5 * (1.0 - 1.0 / square_spec.level))
    # N(0, 1 + a sqrt(2)) at the level
    assert fit.statistic < 0.1


def test_tilted_reference_is_density(exponential_spec: RunSpec) -> None:
    """Test the histogram overlay integrates to one.

    Args:
        exponential_spec: A centered exponential run
    """
    mass, _ = integrate.quad(lambda x: float(tilted_reference(exponential_spec, x)), -1.0, np.inf)
    assert mass == pytest.approx(1.0, abs=1e-8)
