"""The adaptive product density approximating the conditioned run.

Step ``i`` of a run of length ``k`` out of ``n`` has density

    h_i(y | y_1^i) = C_i p(y) n(anchor + alpha beta, alpha, f(y))

where ``n(mean, variance, x)`` is the normal density, ``alpha`` and ``beta``
come from the cumulants at the tilt ``t_i`` matching the running mean target
``m_i``, and ``C_i`` normalizes the step.
"""

from __future__ import annotations

import enum
import logging
import math

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from scipy import integrate, special

from .exceptions import ConfigError, DegenerateEstimate, TargetOutsideRange, TiltOutOfDomain
from .models import LOG_SQRT_2PI
from .tilted_family import (
    CumulantPoint,
    cumulants_at,
    incremental_t_update,
    invert_m,
    invert_m_many,
    tilt_log_density,
)
from .utils import Stream, substream


if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from .models import SourceModel


logger = logging.getLogger(__name__)

DEFAULT_MC_BUDGET = 100_000
MIN_MC_BUDGET = 1000
# incremental tilts are re-solved exactly every this many steps
DEFAULT_REFRESH = 5
QUADRATURE_EPSREL = 1e-10


class MeanAnchor(str, enum.Enum):
    """Where the Gaussian factor of a step is anchored."""

    A = "a"
    MI = "mi"


class Inversion(str, enum.Enum):
    """How the tilt of each step is obtained."""

    EXACT = "exact"
    INCREMENTAL = "incremental"


class FirstStep(str, enum.Enum):
    """How the first increment is distributed."""

    TILTED = "tilted"
    PRODUCT = "product"


class BetaForm(str, enum.Enum):
    """Power of the variance in the skewness correction of beta."""

    S4 = "s4"
    S2 = "s2"


class NormalizingMethod(str, enum.Enum):
    """How the step normalizing constants are computed."""

    AUTO = "auto"
    MONTE_CARLO = "monte_carlo"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class RunSpec:  # pylint: disable=too-many-instance-attributes
    """A fully reproducible description of one experiment.

    Attributes:
        n: The walk length
        k: The run length
        a: The standardized conditioning level
        model: The source model
        mean_anchor: Anchor of the Gaussian factor
        mc_budget_c: Draws per Monte Carlo normalizing constant
        inversion: Exact or incremental tilts
        seed: The reproducibility seed
        first_step: Law of the first increment
        beta_form: Variance power in beta
        normalizing: Normalizing constant method
        refresh: Steps between exact re-solves of incremental tilts, 0 for never
    """

    n: int
    k: int
    a: float
    model: SourceModel
    mean_anchor: MeanAnchor = MeanAnchor.MI
    mc_budget_c: int = DEFAULT_MC_BUDGET
    inversion: Inversion = Inversion.EXACT
    seed: int = 0
    first_step: FirstStep = FirstStep.PRODUCT
    beta_form: BetaForm = BetaForm.S4
    normalizing: NormalizingMethod = NormalizingMethod.AUTO
    refresh: int = DEFAULT_REFRESH

    def __post_init__(self) -> None:
        """Validate the run description.

        Raises:
            ConfigError: If a field is out of range
        """
        if not (math.isfinite(self.a) and self.a > 0.0):
            msg = f"The level a must be a positive number, got {self.a!r}."
            raise ConfigError(msg)
        max_k = self.n - 1 if self.model.exact_product else self.n - 2
        if not 1 <= self.k <= max_k:
            msg = (
                f"The run length must satisfy 1 <= k <= {max_k} for n={self.n}, got k={self.k};"
                " n - k must grow without bound for the approximation to hold."
            )
            raise ConfigError(msg)
        if self.k == self.n - 1:
            logger.warning(
                "k = n - 1 leaves a single free increment;"
                " only the exact %s product is valid here.",
                self.model.name,
            )
        if self.mc_budget_c < MIN_MC_BUDGET:
            msg = (
                f"The Monte Carlo budget must be at least {MIN_MC_BUDGET}, got {self.mc_budget_c}."
            )
            raise ConfigError(msg)
        if not 0 <= self.seed < 2**64:
            msg = f"The seed must be a 64-bit unsigned integer, got {self.seed}."
            raise ConfigError(msg)
        if self.refresh < 0:
            msg = f"The tilt refresh interval must be 0 or positive, got {self.refresh}."
            raise ConfigError(msg)

    def solves_exactly(self, i: int) -> bool:
        """Whether the tilt of step i comes from the exact inversion.

        Args:
            i: The step index

        Returns:
            True for exact inversion, the first step and every refresh step
        """
        if i == 0 or self.inversion is Inversion.EXACT:
            return True
        return self.refresh > 0 and i % self.refresh == 0

    @property
    def level(self) -> float:
        """The conditioning level on the f scale, sigma a + mu."""
        return self.model.level(self.a)

    @property
    def closed_form_constants(self) -> bool:
        """Whether the step constants have the Gaussian closed form."""
        return self.model.exact_product and self.normalizing is NormalizingMethod.AUTO

    def with_k(self, k: int) -> RunSpec:
        """Return the same experiment with another run length.

        Args:
            k: The run length

        Returns:
            The new run description
        """
        return replace(self, k=k)


@dataclass(frozen=True)
class StepDensity:
    """Parameters of one step density.

    Attributes:
        i: Step index, 0-based
        m_i: Adaptive mean target on the f scale
        t_i: Tilt of the step
        alpha: Variance of the Gaussian factor
        beta: Shift of the Gaussian factor
        center: Mean of the Gaussian factor, anchor + alpha beta
        cumulants: Cumulants at t_i
        tilted: Whether the step is the tilted law itself
        log_c: Log normalizing constant
        log_c_stderr: Standard error of log_c, 0 for deterministic methods
    """

    i: int
    m_i: float
    t_i: float
    alpha: float
    beta: float
    center: float
    cumulants: CumulantPoint
    tilted: bool = False
    log_c: float = math.nan
    log_c_stderr: float = math.nan

    @property
    def envelope_center(self) -> float:
        """Center of the Gaussian factor seen from the tilted law at t_i."""
        return self.center - self.alpha * self.t_i


def log_normal_pdf(x: ArrayLike, mean: ArrayLike, variance: ArrayLike) -> NDArray[np.float64]:
    """Evaluate the log density of N(mean, variance) at x.

    Args:
        x: Points
        mean: Means
        variance: Variances

    Returns:
        The log densities, broadcast together
    """
    x = np.asarray(x, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    diff = x - mean
    return -0.5 * diff * diff / variance - 0.5 * np.log(variance) - LOG_SQRT_2PI


def _beta(
    spec: RunSpec,
    t: ArrayLike,
    s2: ArrayLike,
    mu3: ArrayLike,
    rest: ArrayLike,
) -> NDArray[np.float64]:
    power = 2.0 if spec.beta_form is BetaForm.S4 else 1.0
    return np.asarray(t + mu3 / (2.0 * np.power(s2, power) * rest), dtype=np.float64)


def step_params(
    spec: RunSpec,
    i: int,
    partial_sum: float,
    prev: CumulantPoint | None = None,
    x_i: float | None = None,
) -> StepDensity:
    """Compute the parameters of step i, without its normalizing constant.

    Args:
        spec: The run description
        i: The step index, 0 <= i <= k - 1
        partial_sum: Sum of f over the increments drawn so far
        prev: Cumulants of the previous step, for incremental inversion
        x_i: f of the latest increment, for incremental inversion

    Returns:
        The step parameters

    Raises:
        ValueError: If the step index is out of range or incremental data is missing
        TargetOutsideRange: If the running mean target is not attained
    """
    if not 0 <= i < spec.k:
        msg = f"Step index {i} is outside 0..{spec.k - 1}."
        raise ValueError(msg)
    n = spec.n
    level = spec.level
    m_i = (n * level - partial_sum) / (n - i)
    if spec.solves_exactly(i):
        try:
            t_i = invert_m(spec.model, m_i)
        except TargetOutsideRange as exc:
            raise exc.at_step(i) from exc
    else:
        if prev is None or x_i is None:
            msg = (
                "Incremental inversion needs the previous cumulants and f of the latest increment."
            )
            raise ValueError(msg)
        t_i = incremental_t_update(prev, x_i, n, i)
    try:
        cumulants = cumulants_at(spec.model, t_i)
    except TiltOutOfDomain as exc:
        raise TargetOutsideRange(m_i, step=i, detail=str(exc)) from exc
    rest = n - i - 1
    alpha = cumulants.s2 * rest
    beta = float(_beta(spec, t_i, cumulants.s2, cumulants.mu3, rest))
    anchor = m_i if spec.mean_anchor is MeanAnchor.MI else level
    return StepDensity(
        i=i,
        m_i=m_i,
        t_i=t_i,
        alpha=alpha,
        beta=beta,
        center=anchor + alpha * beta,
        cumulants=cumulants,
        tilted=i == 0 and spec.first_step is FirstStep.TILTED,
    )


def gaussian_log_c(center: ArrayLike, alpha: ArrayLike) -> NDArray[np.float64]:
    """Return the closed form log constant of a standard normal step.

    The integral of phi(y) n(center, alpha, y) is the N(0, 1 + alpha)
    density at center.

    Args:
        center: Means of the Gaussian factors
        alpha: Variances of the Gaussian factors

    Returns:
        The log normalizing constants
    """
    return -log_normal_pdf(center, 0.0, 1.0 + np.asarray(alpha, dtype=np.float64))


def _log_c_from_integral(
    model: SourceModel,
    tilt: ArrayLike,
    center: ArrayLike,
    alpha: ArrayLike,
    log_integral: ArrayLike,
) -> NDArray[np.float64]:
    """Assemble log C from the tilted representation of its inverse.

    With M' = center - alpha t,
    1/C = exp(psi(t) - t center + alpha t^2 / 2) (2 pi alpha)^(-1/2)
          E_t[exp(-(f(Y) - M')^2 / (2 alpha))].
    """
    tilt = np.asarray(tilt, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    log_c_inv = (
        model.log_mgf(tilt)
        - tilt * center
        + 0.5 * alpha * tilt * tilt
        - 0.5 * np.log(alpha)
        - LOG_SQRT_2PI
        + log_integral
    )
    return np.asarray(-log_c_inv, dtype=np.float64)


def quadrature_log_c(
    model: SourceModel,
    tilt: ArrayLike,
    center: ArrayLike,
    alpha: ArrayLike,
) -> NDArray[np.float64]:
    """Compute step log constants by adaptive vector quadrature.

    All components share one adaptive subdivision; each integrand is the
    tilted density times a factor in (0, 1].

    Args:
        model: The source model
        tilt: Tilts of the steps
        center: Means of the Gaussian factors
        alpha: Variances of the Gaussian factors

    Returns:
        The log constants, NaN where the integral vanishes
    """
    tilt = np.atleast_1d(np.asarray(tilt, dtype=np.float64))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    psi = np.asarray(model.log_mgf(tilt), dtype=np.float64)
    shifted = center - alpha * tilt

    def integrand(y: float) -> NDArray[np.float64]:
        log_p = float(model.log_density(y))
        if not math.isfinite(log_p):
            return np.zeros_like(tilt)
        fy = float(model.f(y))
        exponent = tilt * fy - psi + log_p - (fy - shifted) ** 2 / (2.0 * alpha)
        return np.exp(exponent)

    lo, hi = model.support
    # the tilted laws are centered near their means for identity f
    peak = model.start_point(float(np.median(model.derivatives(tilt)[0])))
    points = (peak,) if lo < peak < hi else None
    value, _ = integrate.quad_vec(
        integrand,
        lo,
        hi,
        epsabs=0.0,
        epsrel=QUADRATURE_EPSREL,
        norm="max",
        points=points,
    )
    value = np.asarray(value, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_integral = np.where(value > 0.0, np.log(value), np.nan)
    return _log_c_from_integral(model, tilt, center, alpha, log_integral)


def normalizing_constant(  # pylint: disable=too-many-positional-arguments
    model: SourceModel,
    mean: float,
    alpha: float,
    budget: int,
    rng: np.random.Generator,
    tilt: float = 0.0,
) -> tuple[float, float]:
    """Estimate the log normalizing constant of a step by Monte Carlo.

    Draws come from the tilted law at ``tilt`` (p itself by default) and
    are reweighted through the tilted representation of 1/C. Models
    without a sampler fall back on quadrature.

    Args:
        model: The source model
        mean: Mean of the Gaussian factor
        alpha: Variance of the Gaussian factor
        budget: Number of draws, at least 1000
        rng: Random stream
        tilt: Tilt of the proposal law

    Returns:
        log C and its delta-method standard error

    Raises:
        ConfigError: If the budget is too small
        ValueError: If alpha is not positive
        DegenerateEstimate: If every sampled weight underflows
    """
    if budget < MIN_MC_BUDGET:
        msg = f"The Monte Carlo budget must be at least {MIN_MC_BUDGET}, got {budget}."
        raise ConfigError(msg)
    if not alpha > 0.0:
        msg = f"The Gaussian factor variance must be positive, got {alpha!r}."
        raise ValueError(msg)
    if tilt != 0.0 and model.has_tilted_sampler:
        draws = model.sample_tilted(tilt, rng, budget)
    elif model.has_sampler:
        tilt = 0.0
        draws = model.sample(rng, budget)
    else:
        logger.debug("No sampler for %s, using quadrature for the constant", model.name)
        log_c = quadrature_log_c(model, tilt, mean, alpha)
        return float(log_c[0]), 0.0
    shifted = mean - alpha * tilt
    fy = model.f(draws)
    log_w = -((fy - shifted) ** 2) / (2.0 * alpha)
    if not np.isfinite(log_w).any() or np.max(log_w) == -np.inf:
        msg = f"All {budget} normalizing weights vanished for mean={mean!r}, alpha={alpha!r}."
        raise DegenerateEstimate(msg)
    peak = float(np.max(log_w))
    weights = np.exp(log_w - peak)
    if not np.any(weights > 0.0):
        msg = f"All {budget} normalizing weights vanished for mean={mean!r}, alpha={alpha!r}."
        raise DegenerateEstimate(msg)
    log_mean = float(special.logsumexp(log_w)) - math.log(budget)
    stderr = float(np.std(weights, ddof=1) / (math.sqrt(budget) * np.mean(weights)))
    log_c = float(_log_c_from_integral(model, tilt, mean, alpha, log_mean))
    return log_c, stderr


def with_normalizing_constant(spec: RunSpec, step: StepDensity) -> StepDensity:
    """Return the step with its normalizing constant filled in.

    Args:
        spec: The run description
        step: The step parameters

    Returns:
        The populated step
    """
    if step.tilted:
        return replace(step, log_c=0.0, log_c_stderr=0.0)
    log_c, stderr = _log_constants(
        spec,
        np.array([step.t_i]),
        np.array([step.center]),
        np.array([step.alpha]),
        np.array([step.i]),
    )
    return replace(step, log_c=float(log_c[0]), log_c_stderr=float(stderr[0]))


def _log_constants(
    spec: RunSpec,
    tilt: NDArray[np.float64],
    center: NDArray[np.float64],
    alpha: NDArray[np.float64],
    step_index: NDArray[np.int_],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Compute log constants for a flat batch of steps of one path."""
    model = spec.model
    if spec.closed_form_constants:
        return gaussian_log_c(center, alpha), np.zeros_like(center)
    if spec.normalizing is NormalizingMethod.MONTE_CARLO:
        log_c = np.full_like(center, np.nan)
        stderr = np.full_like(center, np.nan)
        for j, (t, mean, var, i) in enumerate(zip(tilt, center, alpha, step_index, strict=True)):
            if not (math.isfinite(t) and math.isfinite(mean)):
                continue
            rng = substream(spec.seed, Stream.NORMALIZING, int(i))
            log_c[j], stderr[j] = normalizing_constant(
                model,
                float(mean),
                float(var),
                spec.mc_budget_c,
                rng,
                tilt=float(t),
            )
        return log_c, stderr
    log_c = np.full_like(center, np.nan)
    usable = np.isfinite(tilt) & np.isfinite(center) & (alpha > 0.0)
    if usable.any():
        log_c[usable] = quadrature_log_c(model, tilt[usable], center[usable], alpha[usable])
    return log_c, np.zeros_like(center)


@dataclass(frozen=True, eq=False)
class StepTable:
    """Step parameters for a bundle of paths, one row per path.

    Entries of a row are NaN from the first step whose mean target cannot be
    attained onwards.

    Attributes:
        m: Mean targets
        t: Tilts
        s2: Tilted variances
        mu3: Tilted third cumulants
        alpha: Gaussian factor variances
        beta: Gaussian factor shifts
        center: Gaussian factor means
        log_c: Log normalizing constants
        log_c_stderr: Standard errors of log_c
    """

    m: NDArray[np.float64]
    t: NDArray[np.float64]
    s2: NDArray[np.float64]
    mu3: NDArray[np.float64]
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    center: NDArray[np.float64]
    log_c: NDArray[np.float64]
    log_c_stderr: NDArray[np.float64]

    @property
    def valid(self) -> NDArray[np.bool_]:
        """Mask of steps with usable parameters."""
        return np.isfinite(self.t) & np.isfinite(self.log_c)

    def first_invalid(self, row: int) -> int | None:
        """Return the first unusable step of a row.

        Args:
            row: The row index

        Returns:
            The step index, or None if the whole row is usable
        """
        bad = np.flatnonzero(~self.valid[row])
        return int(bad[0]) if bad.size else None

    def step(self, row: int, i: int) -> StepDensity:
        """Return one entry as a step density.

        Args:
            row: The row index
            i: The step index

        Returns:
            The populated step
        """
        t = float(self.t[row, i])
        s2 = float(self.s2[row, i])
        return StepDensity(
            i=i,
            m_i=float(self.m[row, i]),
            t_i=t,
            alpha=float(self.alpha[row, i]),
            beta=float(self.beta[row, i]),
            center=float(self.center[row, i]),
            cumulants=CumulantPoint(
                t=t,
                m=math.nan,
                s2=s2,
                mu3=float(self.mu3[row, i]),
                mu4=math.nan,
            ),
            log_c=float(self.log_c[row, i]),
            log_c_stderr=float(self.log_c_stderr[row, i]),
        )


def _incremental_tilts(
    spec: RunSpec,
    fy: NDArray[np.float64],
    m: NDArray[np.float64],
) -> NDArray[np.float64]:
    rows, steps = fy.shape
    model = spec.model
    lo, hi = model.t_domain
    t = np.full((rows, steps), np.nan)
    t[:, 0] = invert_m(model, spec.level)
    for i in range(1, steps):
        if spec.solves_exactly(i):
            t[:, i] = invert_m_many(model, m[:, i])
            continue
        prev = t[:, i - 1]
        alive = np.isfinite(prev)
        m_prev, s2_prev, _, _ = model.derivatives(np.where(alive, prev, 0.0))
        with np.errstate(all="ignore"):
            nxt = prev + (m_prev - fy[:, i - 1]) / ((spec.n - i) * s2_prev)
        inside = alive & (nxt > lo) & (nxt < hi) & (s2_prev > 0.0)
        t[:, i] = np.where(inside, nxt, np.nan)
    return t


def tilt_chain(
    spec: RunSpec,
    paths: ArrayLike,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Compute the running mean targets and tilts of many paths.

    Args:
        spec: The run description
        paths: Increments, shape (rows, length) with length < n

    Returns:
        The targets m and tilts t, both of shape (rows, length), NaN from
        the first step that cannot be inverted

    Raises:
        ValueError: If the paths are longer than n - 1
    """
    values = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    rows, steps = values.shape
    if steps >= spec.n:
        msg = f"Paths of length {steps} do not fit a walk of length {spec.n}."
        raise ValueError(msg)
    model = spec.model
    n = spec.n
    level = spec.level
    fy = model.f(values)
    index = np.arange(steps)
    partial = np.zeros((rows, steps))
    if steps > 1:
        partial[:, 1:] = np.cumsum(fy, axis=1)[:, :-1]
    m = (n * level - partial) / (n - index)

    if spec.inversion is Inversion.EXACT:
        t = invert_m_many(model, m)
        # the first step must match the scalar inversion exactly
        t[:, 0] = invert_m(model, level)
    else:
        t = _incremental_tilts(spec, fy, m)
    # a failed step aborts the rest of its path
    t = np.where(np.cumprod(np.isfinite(t), axis=1).astype(bool), t, np.nan)
    return m, t


def step_table(spec: RunSpec, paths: ArrayLike) -> StepTable:
    """Compute the step parameters of many paths at once.

    Args:
        spec: The run description
        paths: Increments, shape (rows, length) with length < n

    Returns:
        The step table

    Raises:
        ValueError: If the paths are longer than n - 1
    """
    values = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    rows, steps = values.shape
    model = spec.model
    n = spec.n
    level = spec.level
    index = np.arange(steps)
    m, t = tilt_chain(spec, values)

    alive = np.isfinite(t)
    _, s2, mu3, _ = model.derivatives(np.where(alive, t, 0.0))
    s2 = np.where(alive & (s2 > 0.0), s2, np.nan)
    mu3 = np.where(alive, mu3, np.nan)
    rest = (n - index - 1).astype(np.float64)
    alpha = s2 * rest
    beta = _beta(spec, t, s2, mu3, rest)
    anchor = m if spec.mean_anchor is MeanAnchor.MI else np.full_like(m, level)
    center = anchor + alpha * beta

    log_c = np.full((rows, steps), np.nan)
    log_c_stderr = np.full((rows, steps), np.nan)
    for row in range(rows):
        log_c[row], log_c_stderr[row] = _log_constants(spec, t[row], center[row], alpha[row], index)
    if spec.first_step is FirstStep.TILTED:
        log_c[:, 0] = np.where(np.isfinite(t[:, 0]), 0.0, np.nan)
        log_c_stderr[:, 0] = 0.0
    log_c = np.where(np.cumprod(np.isfinite(log_c), axis=1).astype(bool), log_c, np.nan)
    return StepTable(
        m=m,
        t=t,
        s2=s2,
        mu3=mu3,
        alpha=alpha,
        beta=beta,
        center=center,
        log_c=log_c,
        log_c_stderr=log_c_stderr,
    )


def step_log_density(
    step: StepDensity,
    model: SourceModel,
    spec: RunSpec,  # noqa: ARG001
    y: ArrayLike,
) -> NDArray[np.float64]:
    """Evaluate the log density of one step.

    Args:
        step: The populated step
        model: The source model
        spec: The run description
        y: Points to evaluate

    Returns:
        log C + log p(y) + log n(center, alpha, f(y)), -inf off the support
    """
    if step.tilted:
        return tilt_log_density(model, step.t_i, y)
    log_p = model.log_density(y)
    density = step.log_c + log_p + log_normal_pdf(model.f(y), step.center, step.alpha)
    return np.where(np.isneginf(log_p), -np.inf, density)


def log_density_increments(
    spec: RunSpec,
    paths: ArrayLike,
    table: StepTable | None = None,
) -> NDArray[np.float64]:
    """Return the per-step log densities of many paths.

    Args:
        spec: The run description
        paths: Increments, shape (rows, length)
        table: A precomputed step table for the same paths

    Returns:
        Array of shape (rows, length), NaN from the first unusable step on
    """
    values = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    table = table or step_table(spec, values)
    model = spec.model
    log_p = model.log_density(values)
    with np.errstate(invalid="ignore"):
        gauss = log_normal_pdf(model.f(values), table.center, table.alpha)
        increments = table.log_c + log_p + gauss
    increments = np.where(np.isneginf(log_p), -np.inf, increments)
    if spec.first_step is FirstStep.TILTED:
        t0 = float(table.t[0, 0])
        increments[:, 0] = tilt_log_density(model, t0, values[:, 0])
    return np.where(table.valid, increments, np.nan)


def path_log_densities(spec: RunSpec, paths: ArrayLike) -> NDArray[np.float64]:
    """Evaluate the run density of many paths.

    Args:
        spec: The run description
        paths: Increments, shape (rows, length)

    Returns:
        The log densities, NaN for paths that leave the attainable range
    """
    return np.sum(log_density_increments(spec, paths), axis=1)


def path_log_density(spec: RunSpec, y: ArrayLike) -> float:
    """Evaluate the run density of one path.

    Args:
        spec: The run description
        y: The k increments of the path

    Returns:
        The log density

    Raises:
        ValueError: If the path length is not k
        TargetOutsideRange: With the offending step index
    """
    values = np.asarray(y, dtype=np.float64).reshape(1, -1)
    if values.shape[1] != spec.k:
        msg = f"Expected a path of length {spec.k}, got {values.shape[1]}."
        raise ValueError(msg)
    table = step_table(spec, values)
    bad = table.first_invalid(0)
    if bad is not None:
        raise TargetOutsideRange(float(table.m[0, bad]), step=bad)
    return float(np.sum(log_density_increments(spec, values, table)))


def step_densities(spec: RunSpec, y: ArrayLike) -> list[StepDensity]:
    """Build the populated step densities along one path.

    Args:
        spec: The run description
        y: The increments of the path

    Returns:
        One step density per increment

    Raises:
        TargetOutsideRange: With the offending step index
    """
    values = np.asarray(y, dtype=np.float64).reshape(1, -1)
    table = step_table(spec, values)
    bad = table.first_invalid(0)
    if bad is not None:
        raise TargetOutsideRange(float(table.m[0, bad]), step=bad)
    steps = []
    for i in range(values.shape[1]):
        step = table.step(0, i)
        cumulants = cumulants_at(spec.model, step.t_i)
        tilted = i == 0 and spec.first_step is FirstStep.TILTED
        steps.append(replace(step, cumulants=cumulants, tilted=tilted))
    return steps
