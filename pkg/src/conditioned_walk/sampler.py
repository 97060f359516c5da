"""Draw runs from the adaptive product density.

Each run is built one increment at a time: the step parameters are
recomputed from the realized partial sums, then the next increment is drawn
with one of three kernels.

- ``tilted``: propose from the exact tilted law at ``t_i`` and accept with
  the Gaussian factor as probability.
- ``rejection``: propose from the Gaussian factor and accept against a bound
  on ``p`` (identity ``f`` only).
- ``mh``: random walk Metropolis-Hastings, for everything else.
"""

from __future__ import annotations

import enum
import logging
import math

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from scipy import special, stats

from .exceptions import ConfigError, EnvelopeFailure, TargetOutsideRange
from .run_density import (
    RunSpec,
    StepDensity,
    log_normal_pdf,
    path_log_density,
    step_params,
)
from .tilted_family import cumulants_at, epsilon_n, invert_m, tilt_log_density
from .utils import Stream, spawn_key, substream


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from .models import SourceModel


logger = logging.getLogger(__name__)

MAX_PROPOSALS = 100_000
FIRST_BATCH = 16
MAX_BATCH = 65_536
DEFAULT_MH_BURN_IN = 200
DEFAULT_RETRIES = 10


class Kernel(str, enum.Enum):
    """Increment samplers."""

    AUTO = "auto"
    TILTED = "tilted"
    REJECTION = "rejection"
    MH = "mh"


@dataclass(frozen=True)
class SamplerOptions:
    """Tuning of the path sampler.

    Attributes:
        kernel: The increment sampler
        mh_burn_in: Metropolis-Hastings steps per increment
        mh_scale: Multiplier of the tilted standard deviation for MH proposals
        retries: Fresh attempts after a path leaves the attainable range
        workers: Worker processes for path bundles
    """

    kernel: Kernel = Kernel.AUTO
    mh_burn_in: int = DEFAULT_MH_BURN_IN
    mh_scale: float = 1.0
    retries: int = DEFAULT_RETRIES
    workers: int = 1

    def __post_init__(self) -> None:
        """Validate the options.

        Raises:
            ConfigError: If an option is out of range
        """
        if self.mh_burn_in < 1:
            msg = f"The MH burn-in must be at least 1, got {self.mh_burn_in}."
            raise ConfigError(msg)
        if not self.mh_scale > 0.0:
            msg = f"The MH scale must be positive, got {self.mh_scale}."
            raise ConfigError(msg)
        if self.retries < 0:
            msg = f"The retry budget cannot be negative, got {self.retries}."
            raise ConfigError(msg)
        if self.workers < 1:
            msg = f"At least one worker is needed, got {self.workers}."
            raise ConfigError(msg)

    def resolve(self, model: SourceModel) -> Kernel:
        """Pick the kernel used for a model.

        Args:
            model: The source model

        Returns:
            A concrete kernel

        Raises:
            ConfigError: If the requested kernel cannot serve the model
        """
        rejection_ok = model.f_is_identity and model.density_bound is not None
        if self.kernel is Kernel.AUTO:
            if model.has_tilted_sampler:
                return Kernel.TILTED
            return Kernel.REJECTION if rejection_ok else Kernel.MH
        if self.kernel is Kernel.TILTED and not model.has_tilted_sampler:
            msg = f"Model {model.name!r} has no tilted sampler; choose the rejection or mh kernel."
            raise ConfigError(msg)
        if self.kernel is Kernel.REJECTION and not rejection_ok:
            msg = (
                "The rejection kernel needs f = identity and a density bound,"
                f" which {model.name!r} lacks."
            )
            raise ConfigError(msg)
        return self.kernel


@dataclass(frozen=True, eq=False)
class PathSample:
    """One run drawn from the product density.

    Attributes:
        values: The k increments
        partial_sums: Running sums of f over the increments
        log_density: Log density of the run
        rejection_stats: Proposals spent on each increment
        seed_trace: Spawn key of the random stream that produced the run
        m_trace: Mean target of each step
        retries: Attempts discarded before this run
    """

    values: NDArray[np.float64]
    partial_sums: NDArray[np.float64]
    log_density: float
    rejection_stats: NDArray[np.int64]
    seed_trace: tuple[int, ...]
    m_trace: NDArray[np.float64] = field(default_factory=lambda: np.empty(0))
    retries: int = 0

    @property
    def k(self) -> int:
        """The run length."""
        return int(self.values.shape[0])

    def consistent(self, model: SourceModel) -> bool:
        """Check the stored partial sums against the increments.

        Args:
            model: The source model

        Returns:
            True when the partial sums match exactly
        """
        return bool(np.array_equal(np.cumsum(model.f(self.values)), self.partial_sums))


def _first_accepted(accept: NDArray[np.bool_]) -> int | None:
    hits = np.flatnonzero(accept)
    return int(hits[0]) if hits.size else None


def sample_step_rejection(
    model: SourceModel,
    mean: float,
    variance: float,
    rng: np.random.Generator,
) -> tuple[float, int]:
    """Draw from the density proportional to p(y) n(mean, variance, y).

    The proposal is the inverse normal CDF of a uniform draw and is accepted
    when ``K U <= p(y)`` with ``K`` the density bound.

    Args:
        model: The source model, with identity f and a density bound
        mean: Mean of the Gaussian factor
        variance: Variance of the Gaussian factor
        rng: Random stream

    Returns:
        The draw and the number of proposals it took

    Raises:
        ConfigError: If the model does not fit the kernel
        EnvelopeFailure: If no proposal is accepted within the budget
    """
    bound = model.density_bound
    if not model.f_is_identity or bound is None:
        msg = f"Rejection sampling needs f = identity and a density bound for {model.name!r}."
        raise ConfigError(msg)
    scale = math.sqrt(variance)
    proposals = 0
    batch = FIRST_BATCH
    while proposals < MAX_PROPOSALS:
        y = mean + scale * special.ndtri(rng.random(batch))
        u = rng.random(batch)
        with np.errstate(divide="ignore"):
            accept = bound * u <= np.exp(model.log_density(y))
        hit = _first_accepted(accept)
        if hit is not None:
            return float(y[hit]), proposals + hit + 1
        proposals += batch
        batch = min(2 * batch, MAX_BATCH)
    msg = (
        f"No proposal accepted in {proposals} tries for mean={mean!r}, variance={variance!r};"
        " the Gaussian factor sits far from the mass of p."
    )
    raise EnvelopeFailure(msg)


def sample_step_tilted(
    model: SourceModel,
    step: StepDensity,
    rng: np.random.Generator,
) -> tuple[float, int]:
    """Draw one increment through the tilted envelope.

    The step target is proportional to the tilted density at ``t_i`` times
    ``exp(-(f(y) - M')**2 / (2 alpha))``, with ``M'`` the envelope center,
    so tilted proposals are accepted with that factor as probability.

    Args:
        model: The source model, with a tilted sampler
        step: The step parameters
        rng: Random stream

    Returns:
        The draw and the number of proposals it took

    Raises:
        EnvelopeFailure: If no proposal is accepted within the budget
    """
    if step.tilted:
        return float(model.sample_tilted(step.t_i, rng, 1)[0]), 1
    shifted = step.envelope_center
    proposals = 0
    batch = FIRST_BATCH
    while proposals < MAX_PROPOSALS:
        y = model.sample_tilted(step.t_i, rng, batch)
        u = rng.random(batch)
        accept = np.log(u) <= -((model.f(y) - shifted) ** 2) / (2.0 * step.alpha)
        hit = _first_accepted(accept)
        if hit is not None:
            return float(y[hit]), proposals + hit + 1
        proposals += batch
        batch = min(2 * batch, MAX_BATCH)
    msg = f"No tilted proposal accepted in {proposals} tries at step {step.i}."
    raise EnvelopeFailure(msg)


def _step_target(
    step: StepDensity,
    model: SourceModel,
) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    """Return the unnormalized log density of a step."""
    if step.tilted:
        return lambda y: tilt_log_density(model, step.t_i, y)

    def target(y: NDArray[np.float64]) -> NDArray[np.float64]:
        log_p = model.log_density(y)
        with np.errstate(invalid="ignore"):
            value = log_p + log_normal_pdf(model.f(y), step.center, step.alpha)
        return np.where(np.isneginf(log_p), -np.inf, value)

    return target


def _random_walk(  # pylint: disable=too-many-positional-arguments
    log_target: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    start: NDArray[np.float64],
    scale: float,
    steps: int,
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], int]:
    """Run independent random walk chains side by side."""
    x = start.copy()
    log_x = log_target(x)
    accepted = 0
    for _ in range(steps):
        proposal = x + scale * rng.standard_normal(x.shape)
        log_proposal = log_target(proposal)
        with np.errstate(invalid="ignore"):
            accept = np.log(rng.random(x.shape)) < log_proposal - log_x
        x = np.where(accept, proposal, x)
        log_x = np.where(accept, log_proposal, log_x)
        accepted += int(np.count_nonzero(accept))
    return x, accepted


def sample_step_mh(  # noqa: PLR0913
    model: SourceModel,
    step: StepDensity,
    spec: RunSpec,
    rng: np.random.Generator,
    *,
    start: float | None = None,
    burn_in: int = DEFAULT_MH_BURN_IN,
    scale: float = 1.0,
    size: int | None = None,
) -> float | NDArray[np.float64]:
    """Draw one increment by random walk Metropolis-Hastings.

    Args:
        model: The source model
        step: The step parameters
        spec: The run description
        rng: Random stream
        start: Initial state, usually the previous increment
        burn_in: Chain length
        scale: Multiplier of the tilted standard deviation
        size: Number of independent chains, None for a single draw

    Returns:
        The final state of each chain
    """
    if start is None:
        start = model.start_point(step.m_i)
    chains = 1 if size is None else size
    spread = scale * model.tilted_scale(step.t_i)
    states, accepted = _random_walk(
        _step_target(step, model),
        np.full(chains, float(start)),
        spread,
        burn_in,
        rng,
    )
    logger.debug(
        "MH step %d of n=%d: acceptance %.3f over %d chains",
        step.i,
        spec.n,
        accepted / (burn_in * chains),
        chains,
    )
    return float(states[0]) if size is None else states


def sample_initial(
    model: SourceModel,
    level: float,
    rng: np.random.Generator,
    *,
    k: int = 1,
    scale: float = 1.0,
) -> float:
    """Draw the first increment from the tilted density at the level.

    Args:
        model: The source model
        level: The mean target on the f scale
        rng: Random stream
        k: The run length, which sets the MH burn-in to 10 k
        scale: Multiplier of the tilted standard deviation for MH

    Returns:
        One draw
    """
    t = invert_m(model, level)
    if model.has_tilted_sampler:
        return float(model.sample_tilted(t, rng, 1)[0])
    states, _ = _random_walk(
        lambda y: tilt_log_density(model, t, y),
        np.array([model.start_point(level)]),
        scale * model.tilted_scale(t),
        10 * k,
        rng,
    )
    return float(states[0])


def _draw_path(
    spec: RunSpec,
    rng: np.random.Generator,
    kernel: Kernel,
    options: SamplerOptions,
) -> tuple[NDArray[np.float64], NDArray[np.int64], NDArray[np.float64]]:
    model = spec.model
    values = np.empty(spec.k)
    counts = np.zeros(spec.k, dtype=np.int64)
    m_trace = np.empty(spec.k)
    partial = 0.0
    prev = None
    x_i = None
    for i in range(spec.k):
        step = step_params(spec, i, partial, prev, x_i)
        if step.tilted:
            y = sample_initial(model, spec.level, rng, k=spec.k, scale=options.mh_scale)
            count = 1 if model.has_tilted_sampler else 10 * spec.k
        elif kernel is Kernel.TILTED:
            y, count = sample_step_tilted(model, step, rng)
        elif kernel is Kernel.REJECTION:
            y, count = sample_step_rejection(model, step.center, step.alpha, rng)
        else:
            start = values[i - 1] if i else None
            y = float(
                sample_step_mh(
                    model,
                    step,
                    spec,
                    rng,
                    start=start,
                    burn_in=options.mh_burn_in,
                    scale=options.mh_scale,
                ),
            )
            count = options.mh_burn_in
        values[i] = y
        counts[i] = count
        m_trace[i] = step.m_i
        x_i = float(model.f(y))
        partial += x_i
        prev = step.cumulants
    return values, counts, m_trace


def sample_path(
    spec: RunSpec,
    rng: np.random.Generator,
    options: SamplerOptions | None = None,
) -> PathSample:
    """Draw one run of length k.

    A run whose mean target leaves the attainable range is redrawn from a
    fresh child stream, up to the retry budget.

    Args:
        spec: The run description
        rng: Random stream
        options: Sampler tuning

    Returns:
        The run

    Raises:
        TargetOutsideRange: When every attempt leaves the attainable range
    """
    options = options or SamplerOptions()
    kernel = options.resolve(spec.model)
    error: TargetOutsideRange | None = None
    for attempt in range(options.retries + 1):
        try:
            values, counts, m_trace = _draw_path(spec, rng, kernel, options)
        except TargetOutsideRange as exc:
            logger.debug("Attempt %d aborted: %s", attempt, exc)
            error = exc
            rng = rng.spawn(1)[0]
            continue
        return PathSample(
            values=values,
            partial_sums=np.cumsum(spec.model.f(values)),
            log_density=path_log_density(spec, values),
            rejection_stats=counts,
            seed_trace=spawn_key(rng),
            m_trace=m_trace,
            retries=attempt,
        )
    assert error is not None  # noqa: S101
    raise error


def _sample_indexed(job: tuple[RunSpec, SamplerOptions, int]) -> PathSample:
    spec, options, index = job
    return sample_path(spec, substream(spec.seed, Stream.PATHS, index), options)


def sample_paths(
    spec: RunSpec,
    count: int,
    options: SamplerOptions | None = None,
) -> list[PathSample]:
    """Draw a bundle of independent runs.

    Path ``j`` always uses the substream keyed by (seed, PATHS, j), so the
    bundle does not depend on the number of workers.

    Args:
        spec: The run description
        count: Number of runs
        options: Sampler tuning

    Returns:
        The runs in index order

    Raises:
        ConfigError: If the count is not positive
    """
    if count < 1:
        msg = f"The number of paths must be positive, got {count}."
        raise ConfigError(msg)
    options = options or SamplerOptions()
    jobs = [(spec, options, index) for index in range(count)]
    if options.workers == 1 or count == 1:
        paths = [_sample_indexed(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            paths = list(pool.map(_sample_indexed, jobs))
    retried = sum(path.retries > 0 for path in paths)
    if retried:
        logger.info(
            "%d of %d paths were redrawn after leaving the attainable range",
            retried,
            count,
        )
    return paths


@dataclass(frozen=True, eq=False)
class PathDiagnostics:  # pylint: disable=too-many-instance-attributes
    """Statistics of a bundle checked against the conditioned law.

    Attributes:
        paths: Number of runs
        level: The mean target on the f scale
        mean_y1: Average first increment
        mean_y1_stderr: Standard error of mean_y1
        mean_y1_y2: Average product of the first two increments
        mean_y1_sq: Average squared first increment
        expected_y1_sq: s2(t) + level**2 at the tilt of the level
        max_over_log_k: Largest value of max_i y_i / log k over the runs
        drift_ratio: Per-run max_i |m_i - level| / (a eps_n)
        retry_rate: Share of runs that needed a redraw
    """

    paths: int
    level: float
    mean_y1: float
    mean_y1_stderr: float
    mean_y1_y2: float
    mean_y1_sq: float
    expected_y1_sq: float
    max_over_log_k: float
    drift_ratio: NDArray[np.float64]
    retry_rate: float

    def drift_within(self, bound: float = 5.0) -> float:
        """Return the share of runs whose mean targets stay within the bound.

        Args:
            bound: The bound on the drift ratio

        Returns:
            A fraction in [0, 1]
        """
        return float(np.mean(self.drift_ratio <= bound))


def path_diagnostics(spec: RunSpec, paths: Sequence[PathSample]) -> PathDiagnostics:
    """Summarize a bundle against the conditioned law.

    Args:
        spec: The run description
        paths: The runs

    Returns:
        The diagnostics

    Raises:
        ConfigError: If the bundle is empty
    """
    if not paths:
        msg = "Diagnostics need at least one path."
        raise ConfigError(msg)
    values = np.vstack([path.values for path in paths])
    first = values[:, 0]
    second = values[:, 1] if values.shape[1] > 1 else np.full_like(first, np.nan)
    cumulants = cumulants_at(spec.model, invert_m(spec.model, spec.level))
    log_k = math.log(spec.k) if spec.k > 1 else math.nan
    scale = spec.a * epsilon_n(spec.n, spec.k)
    drift = np.array([np.max(np.abs(path.m_trace - spec.level)) / scale for path in paths])
    return PathDiagnostics(
        paths=len(paths),
        level=spec.level,
        mean_y1=float(np.mean(first)),
        mean_y1_stderr=(
            float(np.std(first, ddof=1) / math.sqrt(len(paths))) if len(paths) > 1 else math.nan
        ),
        mean_y1_y2=float(np.mean(first * second)),
        mean_y1_sq=float(np.mean(first * first)),
        expected_y1_sq=cumulants.s2 + spec.level**2,
        max_over_log_k=float(np.max(values.max(axis=1) / log_k)),
        drift_ratio=drift,
        retry_rate=sum(path.retries > 0 for path in paths) / len(paths),
    )


@dataclass(frozen=True)
class MarginalFit:
    """Pooled increments compared with the tilted law at the level.

    Attributes:
        tilt: Tilt whose law is the reference
        statistic: Kolmogorov-Smirnov distance, NaN without a closed form CDF
        pvalue: Kolmogorov-Smirnov p-value
        count: Number of pooled increments
    """

    tilt: float
    statistic: float
    pvalue: float
    count: int


def marginal_fit(spec: RunSpec, paths: Sequence[PathSample]) -> MarginalFit:
    """Compare pooled increments with the tilted law at the level.

    For f = x**2 on normal increments this reference is N(0, 1 + a sqrt(2)).

    Args:
        spec: The run description
        paths: The runs

    Returns:
        The fit

    Raises:
        ConfigError: If the bundle is empty
    """
    if not paths:
        msg = "No paths to pool."
        raise ConfigError(msg)
    pooled = np.concatenate([path.values for path in paths])
    tilt = invert_m(spec.model, spec.level)
    if spec.model.tilted_cdf(tilt, 0.0) is None:
        return MarginalFit(tilt=tilt, statistic=math.nan, pvalue=math.nan, count=pooled.size)
    result = stats.kstest(pooled, lambda x: spec.model.tilted_cdf(tilt, x))
    return MarginalFit(
        tilt=tilt,
        statistic=float(result.statistic),
        pvalue=float(result.pvalue),
        count=pooled.size,
    )


def tilted_reference(spec: RunSpec, x: ArrayLike) -> NDArray[np.float64]:
    """Evaluate the tilted density at the level, the histogram overlay.

    Args:
        spec: The run description
        x: Points

    Returns:
        Density values
    """
    tilt = invert_m(spec.model, spec.level)
    return np.exp(tilt_log_density(spec.model, tilt, x))
