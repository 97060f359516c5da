"""Certify how long a run may be for a relative error budget.

The exact conditional density of a run is replaced by a proxy built from
saddlepoint approximations of the densities of normalized sums. Comparing the
product density with this proxy over replicated blocks gives the expected
relative error ``ERE = 1 - B`` and its variance ``VRE = A - B**2``, and the
run length is accepted while ``delta`` stays outside ``ERE -/+ 2 sqrt(VRE)``.
"""

from __future__ import annotations

import enum
import logging
import math

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from numpy.polynomial import hermite_e

from .exceptions import ConfigError, TargetOutsideRange
from .models import LOG_SQRT_2PI
from .run_density import RunSpec, log_density_increments
from .sampler import SamplerOptions, sample_paths
from .tilted_family import RegimeDiagnostics, check_regime, cumulants_at, invert_m, invert_m_many
from .utils import Stream, substream


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from .models import SourceModel
    from .tilted_family import CumulantPoint


logger = logging.getLogger(__name__)

MIN_BLOCKS = 100
DROP_WARNING = 0.01
BRACKET_FLOOR = 1e-12
DEFAULT_L = 1000
DEFAULT_DELTA = 0.05


class BlockSource(str, enum.Enum):
    """Law the replicated blocks are drawn from."""

    P_X = "p_x"
    H = "h"


def saddlepoint_log_density(model: SourceModel, n: int, u: float) -> float:
    """Approximate the log density of the mean of n values of f(X) at u.

    Args:
        model: The source model
        n: Number of summands
        u: The point, inside the attainable mean range

    Returns:
        log sqrt(n) + n psi(t) - n t u - log(s(t) sqrt(2 pi)) with m(t) = u

    Raises:
        TargetOutsideRange: If u is not an attainable mean
    """
    t = invert_m(model, u)
    cumulants = cumulants_at(model, t)
    return float(
        0.5 * math.log(n)
        + n * float(model.log_mgf(t))
        - n * t * u
        - 0.5 * math.log(cumulants.s2)
        - LOG_SQRT_2PI,
    )


def saddlepoint_log_densities(
    model: SourceModel,
    n: ArrayLike,
    u: ArrayLike,
) -> NDArray[np.float64]:
    """Vectorised saddlepoint log densities, NaN where u is not attainable.

    Args:
        model: The source model
        n: Numbers of summands
        u: Points

    Returns:
        The log densities, broadcast together
    """
    n = np.asarray(n, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    t = invert_m_many(model, u)
    alive = np.isfinite(t)
    safe = np.where(alive, t, 0.0)
    _, s2, _, _ = model.derivatives(safe)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = (
            0.5 * np.log(n)
            + n * model.log_mgf(safe)
            - n * safe * u
            - 0.5 * np.log(s2)
            - LOG_SQRT_2PI
        )
    return np.where(alive, value, np.nan)


@dataclass(frozen=True)
class HermiteExpansion:
    """Edgeworth correction polynomials of a standardized sum.

    Attributes:
        order: 3 keeps the skewness term, 4 adds the kurtosis terms
        s2: Variance of one summand
        mu3: Third cumulant of one summand
        mu4: Fourth cumulant of one summand
    """

    order: int
    s2: float
    mu3: float
    mu4: float

    def __post_init__(self) -> None:
        """Validate the expansion.

        Raises:
            ValueError: On an unsupported order or a non-positive variance
        """
        if self.order not in (3, 4):
            msg = f"Edgeworth order must be 3 or 4, got {self.order}."
            raise ValueError(msg)
        if not self.s2 > 0.0:
            msg = f"The variance must be positive, got {self.s2}."
            raise ValueError(msg)

    @classmethod
    def from_cumulants(cls, cum: CumulantPoint, order: int = 4) -> HermiteExpansion:
        """Build the expansion from a cumulant point.

        Args:
            cum: The cumulants
            order: 3 or 4

        Returns:
            The expansion
        """
        return cls(order=order, s2=cum.s2, mu3=cum.mu3, mu4=cum.mu4)

    @property
    def p3_coefficients(self) -> NDArray[np.float64]:
        """Coefficients of P3 in the He basis."""
        return np.array([0.0, 0.0, 0.0, self.mu3 / (6.0 * self.s2**1.5)])

    @property
    def p4_coefficients(self) -> NDArray[np.float64]:
        """Coefficients of P4 in the He basis."""
        coefficients = np.zeros(7)
        coefficients[4] = self.mu4 / (24.0 * self.s2**2)
        coefficients[6] = self.mu3**2 / (72.0 * self.s2**3)
        return coefficients

    def p3(self, z: ArrayLike) -> NDArray[np.float64]:
        """Evaluate P3, an odd polynomial.

        Args:
            z: Standardized points

        Returns:
            P3(z)
        """
        return np.asarray(hermite_e.hermeval(z, self.p3_coefficients), dtype=np.float64)

    def p4(self, z: ArrayLike) -> NDArray[np.float64]:
        """Evaluate P4, an even polynomial.

        Args:
            z: Standardized points

        Returns:
            P4(z)
        """
        return np.asarray(hermite_e.hermeval(z, self.p4_coefficients), dtype=np.float64)

    def bracket(self, z: ArrayLike, n: int) -> NDArray[np.float64]:
        """Return 1 + P3/sqrt(n), plus P4/n at order 4.

        Args:
            z: Standardized points
            n: Number of summands

        Returns:
            The correction factor of the normal density
        """
        value = 1.0 + self.p3(z) / math.sqrt(n)
        if self.order == 4:  # noqa: PLR2004
            value = value + self.p4(z) / n
        return value

    @property
    def kappa1(self) -> float:
        """mu3 / (2 s**4), the skewness shift of beta."""
        return self.mu3 / (2.0 * self.s2**2)

    @property
    def kappa2_printed(self) -> float:
        """The second order constant in its printed form."""
        s4 = self.s2**2
        return (self.mu3 - s4) / (8.0 * s4) + 15.0 * self.mu3**2 / (72.0 * self.s2**3)

    @property
    def kappa2(self) -> float:
        """The second order constant consistent with P4, equal to -P4(0)."""
        return 15.0 * self.mu3**2 / (72.0 * self.s2**3) - self.mu4 / (8.0 * self.s2**2)


def edgeworth_log_density(
    cum: CumulantPoint,
    n: int,
    z: ArrayLike,
    order: int = 4,
) -> NDArray[np.float64]:
    """Evaluate the Edgeworth log density of a standardized sum.

    Args:
        cum: Cumulants of one summand
        n: Number of summands, at least 2
        z: Standardized points
        order: 3 or 4

    Returns:
        log of n(z) (1 + P3/sqrt(n) [+ P4/n]), with the bracket floored at 1e-12

    Raises:
        ValueError: If n is below 2
    """
    if n < 2:  # noqa: PLR2004
        msg = f"The Edgeworth expansion needs n >= 2, got {n}."
        raise ValueError(msg)
    expansion = HermiteExpansion.from_cumulants(cum, order)
    z = np.asarray(z, dtype=np.float64)
    bracket = np.maximum(expansion.bracket(z, n), BRACKET_FLOOR)
    return -0.5 * z * z - LOG_SQRT_2PI + np.log(bracket)


def proxy_log_densities(spec: RunSpec, blocks: ArrayLike, ks: Sequence[int]) -> NDArray[np.float64]:
    """Evaluate the proxy conditional density on the prefixes of many blocks.

    By Bayes formula the density of the first k increments given the level is
    p_X(y) (n / (n - k)) p_{n-k}(m_k) / p_n(level), with both sum densities
    replaced by their saddlepoint approximations.

    Args:
        spec: The run description
        blocks: Increments, shape (rows, length)
        ks: Prefix lengths, each at most the block length and below n

    Returns:
        Array of shape (rows, len(ks)), NaN where m_k is not attainable
    """
    values = np.atleast_2d(np.asarray(blocks, dtype=np.float64))
    model = spec.model
    n = spec.n
    level = spec.level
    ks_array = np.asarray(ks, dtype=np.int64)
    zeros = np.zeros((values.shape[0], 1))
    log_px = np.concatenate([zeros, np.cumsum(model.log_density(values), axis=1)], axis=1)
    sums = np.concatenate([zeros, np.cumsum(model.f(values), axis=1)], axis=1)
    rest = (n - ks_array).astype(np.float64)
    m_k = (n * level - sums[:, ks_array]) / rest
    numerator = saddlepoint_log_densities(model, rest, m_k)
    denominator = saddlepoint_log_density(model, n, level)
    return log_px[:, ks_array] + np.log(n / rest) + numerator - denominator


def proxy_conditional_log_density(spec: RunSpec, y: ArrayLike) -> float:
    """Evaluate the proxy conditional density of one run.

    Args:
        spec: The run description
        y: The increments, possibly empty

    Returns:
        The proxy log density

    Raises:
        ValueError: If the run is too long for the walk
        TargetOutsideRange: With the run length as index when m_k is not attainable
    """
    values = np.asarray(y, dtype=np.float64).reshape(1, -1)
    k = values.shape[1]
    if k >= spec.n:
        msg = f"A run of length {k} does not fit a walk of length {spec.n}."
        raise ValueError(msg)
    value = float(proxy_log_densities(spec, values, [k])[0, 0])
    if math.isnan(value):
        m_k = (spec.n * spec.level - float(np.sum(spec.model.f(values)))) / (spec.n - k)
        raise TargetOutsideRange(m_k, step=k)
    return value


class CIBar(NamedTuple):
    """Relative error summary of one run length."""

    ere_bar: float
    vre_bar: float
    ci_lo: float
    ci_hi: float


def ci_bar(a_hat: float, b_hat: float) -> CIBar:
    """Turn the two moment estimates into an error interval.

    Args:
        a_hat: Estimate of A
        b_hat: Estimate of B

    Returns:
        ERE = 1 - B, VRE = A - B**2 and ERE -/+ 2 sqrt(max(VRE, 0))
    """
    ere = 1.0 - b_hat
    vre = a_hat - b_hat * b_hat
    half = 2.0 * math.sqrt(max(vre, 0.0))
    return CIBar(ere_bar=ere, vre_bar=vre, ci_lo=ere - half, ci_hi=ere + half)


@dataclass(frozen=True)
class ABStatistics:
    """Monte Carlo estimates of A and B for one run length.

    Attributes:
        k: The run length
        L: Blocks requested
        a_hat: Estimate of A
        b_hat: Estimate of B
        a_stderr: Standard error of a_hat
        b_stderr: Standard error of b_hat
        dropped: Blocks dropped for an unattainable mean target
    """

    k: int
    L: int  # noqa: N815
    a_hat: float
    b_hat: float
    a_stderr: float
    b_stderr: float
    dropped: int = 0

    @property
    def drop_rate(self) -> float:
        """Share of dropped blocks."""
        return self.dropped / self.L if self.L else 0.0


def _shifted_mean(log_values: NDArray[np.float64]) -> tuple[float, float]:
    """Mean and standard error of exp(log_values) using a max shift."""
    count = log_values.size
    if count == 0:
        return math.nan, math.nan
    peak = float(np.max(log_values))
    if not math.isfinite(peak):
        return (0.0, 0.0) if peak == -math.inf else (math.inf, math.inf)
    scaled = np.exp(log_values - peak)
    with np.errstate(over="ignore"):
        factor = float(np.exp(peak))
    spread = float(np.std(scaled, ddof=1)) if count > 1 else math.nan
    return factor * float(np.mean(scaled)), factor * spread / math.sqrt(count)


def ab_from_log_densities(  # noqa: PLR0913
    k: int,
    log_h: ArrayLike,
    log_reference: ArrayLike,
    log_px: ArrayLike | None = None,
    *,
    source: BlockSource = BlockSource.P_X,
    requested: int | None = None,
) -> ABStatistics:
    """Estimate A and B from per-block log densities.

    Under p_X blocks, A is the mean of h**3 / (ref**2 p_X) and B the mean of
    h**2 / (ref p_X). Under h blocks they are the means of (h / ref)**2 and
    h / ref. Blocks with a NaN term are dropped.

    Args:
        k: The run length
        log_h: Log product densities of the blocks
        log_reference: Log conditional densities (proxy or exact) of the blocks
        log_px: Log p_X of the blocks, required for p_X blocks
        source: Law the blocks were drawn from
        requested: Number of blocks drawn, defaults to the array size

    Returns:
        The estimates

    Raises:
        ValueError: If p_X blocks come without log p_X
    """
    log_h = np.asarray(log_h, dtype=np.float64)
    log_reference = np.asarray(log_reference, dtype=np.float64)
    if source is BlockSource.P_X:
        if log_px is None:
            msg = "Blocks drawn from p_X need their log p_X values."
            raise ValueError(msg)
        log_px = np.asarray(log_px, dtype=np.float64)
        log_a = 3.0 * log_h - 2.0 * log_reference - log_px
        log_b = 2.0 * log_h - log_reference - log_px
    else:
        log_b = log_h - log_reference
        log_a = 2.0 * log_b
    keep = ~(np.isnan(log_a) | np.isnan(log_b))
    dropped = int(keep.size - np.count_nonzero(keep))
    a_hat, a_stderr = _shifted_mean(log_a[keep])
    b_hat, b_stderr = _shifted_mean(log_b[keep])
    return ABStatistics(
        k=k,
        L=requested if requested is not None else int(keep.size),
        a_hat=a_hat,
        b_hat=b_hat,
        a_stderr=a_stderr,
        b_stderr=b_stderr,
        dropped=dropped,
    )


@dataclass(frozen=True)
class AccuracyReport:  # pylint: disable=too-many-instance-attributes
    """Certified relative error of one run length.

    Attributes:
        k: The run length
        ere_bar: Expected relative error, 1 - B
        vre_bar: Variance of the relative error, A - B**2
        ci_lo: Lower end of ERE -/+ 2 sqrt(VRE)
        ci_hi: Upper end of ERE -/+ 2 sqrt(VRE)
        L: Blocks requested
        a_hat: Estimate of A
        b_hat: Estimate of B
        a_hat_stderr: Standard error of a_hat
        b_hat_stderr: Standard error of b_hat
        vre_stderr: Propagated standard error of vre_bar
        drop_rate: Share of dropped blocks
        negative_variance: vre_bar is negative beyond its standard error
        k_delta: Selected run length, when attached to a selection
    """

    k: int
    ere_bar: float
    vre_bar: float
    ci_lo: float
    ci_hi: float
    L: int  # noqa: N815
    a_hat: float
    b_hat: float
    a_hat_stderr: float
    b_hat_stderr: float
    vre_stderr: float
    drop_rate: float
    negative_variance: bool = False
    k_delta: int | None = None

    @classmethod
    def from_statistics(cls, stats: ABStatistics) -> AccuracyReport:
        """Summarize A and B estimates.

        Args:
            stats: The estimates

        Returns:
            The report
        """
        summary = ci_bar(stats.a_hat, stats.b_hat)
        vre_stderr = math.hypot(stats.a_stderr, 2.0 * stats.b_hat * stats.b_stderr)
        floor = -vre_stderr if math.isfinite(vre_stderr) else 0.0
        negative = summary.vre_bar < floor
        if negative:
            logger.warning(
                "Negative variance estimate %.3g at k=%d (stderr %.3g); increase L",
                summary.vre_bar,
                stats.k,
                vre_stderr,
            )
        return cls(
            k=stats.k,
            ere_bar=summary.ere_bar,
            vre_bar=summary.vre_bar,
            ci_lo=summary.ci_lo,
            ci_hi=summary.ci_hi,
            L=stats.L,
            a_hat=stats.a_hat,
            b_hat=stats.b_hat,
            a_hat_stderr=stats.a_stderr,
            b_hat_stderr=stats.b_stderr,
            vre_stderr=vre_stderr,
            drop_rate=stats.drop_rate,
            negative_variance=negative,
        )

    @property
    def ere_stderr(self) -> float:
        """Standard error of ere_bar."""
        return self.b_hat_stderr

    def contains(self, delta: float) -> bool:
        """Whether delta lies in the error interval.

        Args:
            delta: The error budget

        Returns:
            True when ci_lo <= delta <= ci_hi
        """
        return self.ci_lo <= delta <= self.ci_hi


def _check_blocks(L: int) -> None:  # noqa: N803
    if L < MIN_BLOCKS:
        msg = f"At least {MIN_BLOCKS} blocks are needed, got L={L}."
        raise ConfigError(msg)


def _max_k(spec: RunSpec) -> int:
    return spec.n - 1 if spec.model.exact_product else spec.n - 2


def draw_blocks(
    spec: RunSpec,
    length: int,
    L: int,  # noqa: N803
    rng: np.random.Generator,
    *,
    source: BlockSource = BlockSource.P_X,
    options: SamplerOptions | None = None,
) -> NDArray[np.float64]:
    """Draw L blocks of i.i.d. increments or of runs under h.

    Args:
        spec: The run description
        length: Block length
        L: Number of blocks
        rng: Random stream for p_X blocks
        source: Law of the blocks
        options: Sampler tuning for h blocks

    Returns:
        Array of shape (L, length)

    Raises:
        ConfigError: If p has no sampler for p_X blocks
    """
    if source is BlockSource.H:
        paths = sample_paths(spec.with_k(length), L, options)
        return np.vstack([path.values for path in paths])
    if not spec.model.has_sampler:
        msg = f"Model {spec.model.name!r} has no sampler for p; use block_source h."
        raise ConfigError(msg)
    return spec.model.sample(rng, L * length).reshape(L, length)


def ab_statistics(
    spec: RunSpec,
    L: int,  # noqa: N803
    rng: np.random.Generator,
    *,
    source: BlockSource = BlockSource.P_X,
    options: SamplerOptions | None = None,
) -> ABStatistics:
    """Estimate A and B at the run length of the description.

    Args:
        spec: The run description
        L: Number of blocks, at least 100
        rng: Random stream for the blocks
        source: Law of the blocks
        options: Sampler tuning for h blocks

    Returns:
        The estimates
    """
    return _curve_statistics(spec, [spec.k], L, rng, source=source, options=options)[0]


def _curve_statistics(  # noqa: PLR0913
    spec: RunSpec,
    ks: Sequence[int],
    L: int,  # noqa: N803
    rng: np.random.Generator,
    *,
    source: BlockSource,
    options: SamplerOptions | None,
) -> list[ABStatistics]:
    _check_blocks(L)
    ks = sorted(set(ks))
    k_max = ks[-1]
    limit = _max_k(spec)
    if ks[0] < 1 or k_max > limit:
        msg = f"Run lengths must lie in 1..{limit} for n={spec.n}, got {ks[0]}..{k_max}."
        raise ConfigError(msg)
    long_spec = spec.with_k(k_max)
    blocks = draw_blocks(long_spec, k_max, L, rng, source=source, options=options)
    index = np.asarray(ks) - 1
    log_h = np.cumsum(log_density_increments(long_spec, blocks), axis=1)[:, index]
    log_px = np.cumsum(spec.model.log_density(blocks), axis=1)[:, index]
    log_proxy = proxy_log_densities(spec, blocks, ks)
    results = []
    for column, k in enumerate(ks):
        stats = ab_from_log_densities(
            k,
            log_h[:, column],
            log_proxy[:, column],
            log_px[:, column],
            source=source,
            requested=L,
        )
        if stats.drop_rate >= DROP_WARNING:
            logger.warning("Dropped %.1f%% of blocks at k=%d", 100.0 * stats.drop_rate, k)
        results.append(stats)
    return results


def accuracy_curve(  # noqa: PLR0913
    spec: RunSpec,
    ks: Sequence[int],
    L: int = DEFAULT_L,  # noqa: N803
    rng: np.random.Generator | None = None,
    *,
    source: BlockSource = BlockSource.P_X,
    options: SamplerOptions | None = None,
) -> list[AccuracyReport]:
    """Certify a range of run lengths on common blocks.

    Every run length uses the prefixes of the same L blocks, so the curve is
    smooth in k.

    Args:
        spec: The run description, its k is ignored
        ks: Run lengths
        L: Number of blocks
        rng: Random stream, the (seed, BLOCKS) substream by default
        source: Law of the blocks
        options: Sampler tuning for h blocks

    Returns:
        One report per distinct run length, in increasing order
    """
    rng = rng or substream(spec.seed, Stream.BLOCKS)
    statistics = _curve_statistics(spec, ks, L, rng, source=source, options=options)
    return [AccuracyReport.from_statistics(stats) for stats in statistics]


def k_grid(n: int, cap: int, stride: int | None = None) -> list[int]:
    """Return the run lengths scanned by the selection loop.

    Args:
        n: The walk length
        cap: The largest run length
        stride: Grid step, 1 for n <= 200 and n // 100 otherwise by default

    Returns:
        Increasing run lengths, always ending with the cap
    """
    if stride is None:
        stride = 1 if n <= 200 else max(1, n // 100)  # noqa: PLR2004
    if stride < 1:
        msg = f"The grid stride must be positive, got {stride}."
        raise ConfigError(msg)
    grid = list(range(1, cap + 1, stride))
    if grid[-1] != cap:
        grid.append(cap)
    return grid


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of the run length selection.

    Attributes:
        delta: The error budget
        k_delta: First run length whose interval contains delta, or the cap
        cap_reached: delta never entered an interval
        last_exit: Last scanned run length whose interval contains delta
        reports: The scanned reports
        regime: Regime checks at k_delta
    """

    delta: float
    k_delta: int
    cap_reached: bool
    last_exit: int | None
    reports: list[AccuracyReport] = field(default_factory=list)
    regime: RegimeDiagnostics | None = None


def select_k(  # noqa: PLR0913
    spec: RunSpec,
    delta: float = DEFAULT_DELTA,
    L: int = DEFAULT_L,  # noqa: N803
    rng: np.random.Generator | None = None,
    *,
    stride: int | None = None,
    source: BlockSource = BlockSource.P_X,
    options: SamplerOptions | None = None,
) -> SelectionResult:
    """Find the first run length whose error interval contains delta.

    Args:
        spec: The run description, its k is ignored
        delta: The error budget, in (0, 1)
        L: Number of blocks
        rng: Random stream, the (seed, BLOCKS) substream by default
        stride: Grid step
        source: Law of the blocks
        options: Sampler tuning for h blocks

    Returns:
        The selection, flagged when the cap n - 2 is reached

    Raises:
        ConfigError: If delta is outside (0, 1)
    """
    if not 0.0 < delta < 1.0:
        msg = f"The error budget must lie in (0, 1), got {delta}."
        raise ConfigError(msg)
    cap = spec.n - 2
    grid = k_grid(spec.n, cap, stride)
    reports = accuracy_curve(spec, grid, L, rng, source=source, options=options)
    hits = [report.k for report in reports if report.contains(delta)]
    cap_reached = not hits
    k_delta = cap if cap_reached else hits[0]
    last_exit = hits[-1] if hits else None
    logger.info(
        "k_delta=%d (first entry), last exit=%s, cap reached=%s",
        k_delta,
        last_exit,
        cap_reached,
    )
    reports = [
        replace(report, k_delta=k_delta) if report.k == k_delta else report
        for report in reports
    ]
    return SelectionResult(
        delta=delta,
        k_delta=k_delta,
        cap_reached=cap_reached,
        last_exit=last_exit,
        reports=reports,
        regime=check_regime(spec.n, k_delta, spec.a),
    )


def report_rows(reports: Sequence[AccuracyReport]) -> list[list[float]]:
    """Return the CSV rows of a curve.

    Args:
        reports: The curve

    Returns:
        Rows of k, ere_bar, vre_bar, ci_lo, ci_hi, L, drop_rate
    """
    return [
        [
            report.k,
            report.ere_bar,
            report.vre_bar,
            report.ci_lo,
            report.ci_hi,
            report.L,
            report.drop_rate,
        ]
        for report in reports
    ]
