"""Exact conditional densities for the normal and centered exponential laws.

These are the ground truth that the product density and the proxy are
measured against.
"""

from __future__ import annotations

import enum
import logging
import math

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from scipy import special, stats

from .accuracy import AccuracyReport, BlockSource, ab_from_log_densities
from .exceptions import ConfigError
from .run_density import RunSpec, log_density_increments, log_normal_pdf, path_log_densities
from .sampler import SamplerOptions, sample_paths


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from .sampler import PathSample


logger = logging.getLogger(__name__)

ORACLE_MODELS = ("normal", "centered_exponential")


class Quantile(str, enum.Enum):
    """How a tail probability is turned into a level."""

    GAUSSIAN = "gaussian"
    EXACT = "exact"


def _rows(y: ArrayLike) -> NDArray[np.float64]:
    return np.atleast_2d(np.asarray(y, dtype=np.float64))


def gaussian_conditional_log_density(
    n: int,
    k: int,
    a: float,
    y: ArrayLike,
) -> NDArray[np.float64] | float:
    """Evaluate the exact normal conditional density step by step.

    Given the first i values, the next one is N(m_i, (n - i - 1) / (n - i))
    with m_i = (n a - s_i) / (n - i).

    Args:
        n: The walk length
        k: The run length, at most n - 1
        a: The level of the mean
        y: One run of length k, or rows of runs

    Returns:
        The log density, one per row for 2-D input

    Raises:
        ValueError: If the run length does not match or exceeds n - 1
    """
    values = _rows(y)
    if values.shape[1] != k or not 1 <= k <= n - 1:
        msg = f"Expected runs of length k={k} with 1 <= k <= {n - 1}, got {values.shape[1]}."
        raise ValueError(msg)
    index = np.arange(k)
    partial = np.zeros_like(values)
    partial[:, 1:] = np.cumsum(values, axis=1)[:, :-1]
    mean = (n * a - partial) / (n - index)
    variance = (n - index - 1) / (n - index)
    result = np.sum(log_normal_pdf(values, mean, variance), axis=1)
    return float(result[0]) if np.ndim(y) == 1 else result


def gaussian_joint_log_density(n: int, k: int, a: float, y: ArrayLike) -> float:
    """Evaluate the exact normal conditional density in one piece.

    The first k values given the mean a are jointly normal with mean a and
    covariance I - J / n.

    Args:
        n: The walk length
        k: The run length, at most n - 1
        a: The level of the mean
        y: The run

    Returns:
        The log density
    """
    covariance = np.eye(k) - np.full((k, k), 1.0 / n)
    law = stats.multivariate_normal(mean=np.full(k, a), cov=covariance)
    return float(law.logpdf(np.asarray(y, dtype=np.float64)))


def exponential_conditional_log_density(
    n: int,
    k: int,
    a: float,
    y: ArrayLike,
) -> NDArray[np.float64] | float:
    """Evaluate the exact centered exponential conditional density.

    The remaining n - k shifted values sum to a Gamma(n - k) variable, so
    the density is (n-1)!/(n-k-1)! w**(n-k-1) / (n(1+a))**(n-1) with
    w = n a - sum(y) + n - k, and zero when w <= 0 or some y_i <= -1.

    Args:
        n: The walk length
        k: The run length, at most n - 1
        a: The level of the mean
        y: One run of length k, or rows of runs

    Returns:
        The log density, -inf off the support, one per row for 2-D input

    Raises:
        ValueError: If the run length does not match or exceeds n - 1
    """
    values = _rows(y)
    if values.shape[1] != k or not 1 <= k <= n - 1:
        msg = f"Expected runs of length k={k} with 1 <= k <= {n - 1}, got {values.shape[1]}."
        raise ValueError(msg)
    remainder = n * a - np.sum(values, axis=1) + n - k
    inside = (remainder > 0.0) & np.all(values > -1.0, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_w = special.xlogy(n - k - 1, np.where(inside, remainder, 1.0))
    result = special.gammaln(n) - special.gammaln(n - k) + log_w - (n - 1) * math.log(n * (1.0 + a))
    result = np.where(inside, result, -np.inf)
    return float(result[0]) if np.ndim(y) == 1 else result


def exact_log_densities(spec: RunSpec, y: ArrayLike, k: int | None = None) -> NDArray[np.float64]:
    """Evaluate the exact conditional density of a supported model.

    Args:
        spec: The run description
        y: Runs, shape (rows, k)
        k: Run length, the width of y by default

    Returns:
        One log density per row

    Raises:
        ConfigError: For models without an exact conditional density
    """
    values = _rows(y)
    k = values.shape[1] if k is None else k
    model = spec.model
    if model.name == "normal" and model.f_is_identity:
        return np.asarray(gaussian_conditional_log_density(spec.n, k, spec.a, values))
    if model.name == "centered_exponential":
        return np.asarray(exponential_conditional_log_density(spec.n, k, spec.a, values))
    msg = (
        f"No exact conditional density for model {model.name!r};"
        f" choose one of {', '.join(ORACLE_MODELS)}."
    )
    raise ConfigError(msg)


def has_oracle(spec: RunSpec) -> bool:
    """Whether the model has an exact conditional density.

    Args:
        spec: The run description

    Returns:
        True for the normal model with f = identity and the centered exponential
    """
    return spec.model.name in ORACLE_MODELS and spec.model.f_is_identity


@dataclass(frozen=True)
class OracleEval:
    """Product density of one run against the exact density.

    Attributes:
        log_density_exact: Exact log density
        log_density_approx: Product log density
    """

    log_density_exact: float
    log_density_approx: float

    @property
    def log_difference(self) -> float:
        """log g - log p."""
        return self.log_density_approx - self.log_density_exact

    @property
    def rel_error(self) -> float:
        """g / p - 1."""
        return math.expm1(self.log_difference)


@dataclass(frozen=True)
class OracleSummary:
    """Relative errors of a bundle of runs.

    Attributes:
        evals: One evaluation per run
        mean_abs: Mean of |g / p - 1|
        sd_abs: Standard deviation of |g / p - 1|
        max_abs: Largest |g / p - 1|
        max_abs_log_difference: Largest |log g - log p|
    """

    evals: list[OracleEval]
    mean_abs: float
    sd_abs: float
    max_abs: float
    max_abs_log_difference: float


def oracle_relative_error(spec: RunSpec, paths: Sequence[PathSample] | ArrayLike) -> OracleSummary:
    """Compare the product density with the exact density over runs.

    Args:
        spec: The run description
        paths: Sampled runs, or an array of runs of length k

    Returns:
        The summary

    Raises:
        ConfigError: For models without an exact conditional density or an empty bundle
    """
    if isinstance(paths, list | tuple) and paths and hasattr(paths[0], "values"):
        values = np.vstack([path.values for path in paths])
        approx = np.array([path.log_density for path in paths])
    else:
        values = _rows(paths)
        if values.size == 0:
            msg = "No runs to compare."
            raise ConfigError(msg)
        approx = path_log_densities(spec, values)
    exact = exact_log_densities(spec, values)
    evals = [OracleEval(float(e), float(g)) for e, g in zip(exact, approx, strict=True)]
    diff = approx - exact
    errors = np.abs(np.expm1(diff))
    return OracleSummary(
        evals=evals,
        mean_abs=float(np.mean(errors)),
        sd_abs=float(np.std(errors, ddof=1)) if errors.size > 1 else 0.0,
        max_abs=float(np.max(errors)),
        max_abs_log_difference=float(np.max(np.abs(diff))),
    )


def matched_level(
    model_name: str,
    n: int,
    pvalue: float,
    quantile: Quantile = Quantile.GAUSSIAN,
    *,
    f: str = "id",
) -> float:
    """Return the level a whose tail probability is pvalue.

    The Gaussian rule is a = z_P / sqrt(n) for every model. The exact rule
    solves P(S_n > n (sigma a + mu)) = P with the Gaussian, Gamma or
    chi-square tail of the model.

    Args:
        model_name: The model identifier
        n: The walk length
        pvalue: The tail probability, in (0, 1/2)
        quantile: The rule
        f: The conditioning function of the model

    Returns:
        The level a

    Raises:
        ConfigError: On an invalid probability or an unsupported exact rule
    """
    if not 0.0 < pvalue < 0.5:  # noqa: PLR2004
        msg = f"The tail probability must lie in (0, 0.5), got {pvalue}."
        raise ConfigError(msg)
    squares = model_name == "normal_square" or (model_name == "normal" and f == "square")
    if quantile is Quantile.GAUSSIAN or (model_name == "normal" and not squares):
        return float(stats.norm.isf(pvalue) / math.sqrt(n))
    if model_name == "centered_exponential":
        return float(stats.gamma.isf(pvalue, n) / n - 1.0)
    if squares:
        return float((stats.chi2.isf(pvalue, n) / n - 1.0) / math.sqrt(2.0))
    msg = f"No exact tail for model {model_name!r}; use the gaussian quantile rule."
    raise ConfigError(msg)


def oracle_accuracy_curve(
    spec: RunSpec,
    ks: Sequence[int],
    L: int,  # noqa: N803
    options: SamplerOptions | None = None,
) -> list[AccuracyReport]:
    """Compute the true error curve from runs drawn under the product density.

    With the exact density p in place of the proxy, B = E_h[h / p] and
    A = E_h[(h / p)**2].

    Args:
        spec: The run description, its k is ignored
        ks: Run lengths
        L: Number of runs
        options: Sampler tuning

    Returns:
        One report per distinct run length

    Raises:
        ConfigError: For models without an exact conditional density
    """
    if not has_oracle(spec):
        msg = f"No exact conditional density for model {spec.model.name!r}."
        raise ConfigError(msg)
    ks = sorted(set(ks))
    long_spec = spec.with_k(ks[-1])
    paths = sample_paths(long_spec, L, options)
    values = np.vstack([path.values for path in paths])
    log_h = np.cumsum(log_density_increments(long_spec, values), axis=1)
    reports = []
    for k in ks:
        exact = exact_log_densities(spec, values[:, :k], k)
        stats_k = ab_from_log_densities(
            k,
            log_h[:, k - 1],
            exact,
            source=BlockSource.H,
            requested=L,
        )
        reports.append(AccuracyReport.from_statistics(stats_k))
    return reports
