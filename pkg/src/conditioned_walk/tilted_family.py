"""Cumulant calculus of the exponentially tilted family of a source model."""

from __future__ import annotations

import enum
import logging
import math

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .exceptions import (
    ConfigError,
    NoConvergence,
    NonconvexLogMGF,
    TargetOutsideRange,
    TiltOutOfDomain,
)


if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from .models import SourceModel


logger = logging.getLogger(__name__)

MAX_ITERATIONS = 200
EDGE_MARGIN = 1e-12
RELATIVE_TOLERANCE = 1e-10
# 2**64 already overflows every practical log-MGF
MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class CumulantPoint:
    """Local cumulant data of the tilted family.

    Attributes:
        t: The tilt
        m: Mean of f(X) under the tilt, psi'(t)
        s2: Variance of f(X) under the tilt, psi''(t)
        mu3: Third cumulant, psi'''(t)
        mu4: Fourth cumulant, psi''''(t)
    """

    t: float
    m: float
    s2: float
    mu3: float
    mu4: float

    @property
    def s(self) -> float:
        """Standard deviation under the tilt."""
        return math.sqrt(self.s2)


def _in_domain(model: SourceModel, t: float) -> bool:
    lo, hi = model.t_domain
    return math.isfinite(t) and lo < t < hi


def cumulants_at(model: SourceModel, t: float) -> CumulantPoint:
    """Return the cumulants of the tilted family at tilt t.

    Args:
        model: The source model
        t: The tilt

    Returns:
        The cumulant point

    Raises:
        TiltOutOfDomain: If t is outside the log-MGF domain
        NonconvexLogMGF: If the computed variance is not positive
    """
    if not _in_domain(model, t):
        raise TiltOutOfDomain(t, model.t_domain)
    m, s2, mu3, mu4 = (float(value) for value in model.derivatives(t))
    if not s2 > 0.0:
        msg = f"The log-MGF of {model.name!r} has second derivative {s2!r} at t={t!r}."
        raise NonconvexLogMGF(msg)
    return CumulantPoint(t=t, m=m, s2=s2, mu3=mu3, mu4=mu4)


def tilt_log_density(model: SourceModel, t: float, x: ArrayLike) -> NDArray[np.float64]:
    """Evaluate the log density of the tilted law.

    Args:
        model: The source model
        t: The tilt
        x: Points to evaluate

    Returns:
        t f(x) - psi(t) + log p(x), -inf off the support

    Raises:
        TiltOutOfDomain: If t is outside the log-MGF domain
    """
    if not _in_domain(model, t):
        raise TiltOutOfDomain(t, model.t_domain)
    log_p = model.log_density(x)
    with np.errstate(invalid="ignore"):
        tilted = t * model.f(x) - float(model.log_mgf(t)) + log_p
    return np.where(np.isneginf(log_p), -np.inf, tilted)


class _Status(enum.IntEnum):
    CONVERGED = 0
    OUTSIDE_RANGE = 1
    NO_CONVERGENCE = 2
    NONCONVEX = 3


def _caps(model: SourceModel) -> tuple[float, float]:
    lo, hi = model.t_domain
    lo_cap = lo + EDGE_MARGIN * max(1.0, abs(lo)) if math.isfinite(lo) else -math.inf
    hi_cap = hi - EDGE_MARGIN * max(1.0, abs(hi)) if math.isfinite(hi) else math.inf
    return lo_cap, hi_cap


def _mean_and_variance(
    model: SourceModel,
    t: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    with np.errstate(all="ignore"):
        m, s2, _, _ = model.derivatives(t)
    return np.asarray(m, dtype=np.float64), np.asarray(s2, dtype=np.float64)


def _solve(  # noqa: C901
    model: SourceModel,
    targets: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.int_]]:
    """Solve m(t) = target elementwise with a safeguarded Newton iteration.

    Every element follows the same bracket schedule and is frozen once it
    converges, so its result does not depend on the other elements.

    Args:
        model: The source model
        targets: Flat array of mean targets

    Returns:
        The tilts and a status code per element
    """
    size = targets.size
    result = np.full(size, np.nan)
    status = np.full(size, _Status.NO_CONVERGENCE, dtype=np.int_)
    lo = np.zeros(size)
    hi = np.zeros(size)
    tolerance = RELATIVE_TOLERANCE * np.maximum(1.0, np.abs(targets))

    mean_at_zero = float(_mean_and_variance(model, np.zeros(1))[0][0])
    gap = mean_at_zero - targets
    exact = gap == 0.0
    result[exact] = 0.0
    status[exact] = _Status.CONVERGED
    invalid = ~np.isfinite(targets)
    status[invalid] = _Status.OUTSIDE_RANGE

    lo_cap, hi_cap = _caps(model)
    pending = np.zeros(size, dtype=bool)
    for direction, cap in ((1.0, hi_cap), (-1.0, lo_cap)):
        active = (direction * gap < 0.0) & ~invalid
        inner = 0.0
        step = 1.0
        for _ in range(MAX_DOUBLINGS):
            if not active.any():
                break
            outer = direction * step
            at_cap = direction * outer >= direction * cap
            if at_cap:
                outer = cap
            idx = np.flatnonzero(active)
            m_outer, _ = _mean_and_variance(model, np.full(idx.size, outer))
            g = m_outer - targets[idx]
            with np.errstate(invalid="ignore"):
                found = direction * g >= 0.0
            found_idx = idx[found]
            lo[found_idx] = min(inner, outer)
            hi[found_idx] = max(inner, outer)
            pending[found_idx] = True
            active[found_idx] = False
            failed = ~found & (at_cap | ~np.isfinite(g))
            status[idx[failed]] = _Status.OUTSIDE_RANGE
            active[idx[failed]] = False
            inner = outer
            step *= 2.0
        status[active] = _Status.OUTSIDE_RANGE

    x = 0.5 * (lo + hi)
    for _ in range(MAX_ITERATIONS):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        m, s2 = _mean_and_variance(model, x[idx])
        g = m - targets[idx]
        nonconvex = ~(s2 > 0.0)
        status[idx[nonconvex]] = _Status.NONCONVEX
        pending[idx[nonconvex]] = False
        done = ~nonconvex & (np.abs(g) <= tolerance[idx])
        result[idx[done]] = x[idx[done]]
        status[idx[done]] = _Status.CONVERGED
        pending[idx[done]] = False
        keep = ~nonconvex & ~done
        idx, g, s2 = idx[keep], g[keep], s2[keep]
        below = g < 0.0
        lo[idx[below]] = x[idx[below]]
        hi[idx[~below]] = x[idx[~below]]
        with np.errstate(all="ignore"):
            candidate = x[idx] - g / s2
        outside = ~((candidate > lo[idx]) & (candidate < hi[idx]))
        candidate[outside] = 0.5 * (lo[idx[outside]] + hi[idx[outside]])
        stalled = candidate == x[idx]
        pending[idx[stalled]] = False
        x[idx] = candidate
    return result, status


def invert_m(model: SourceModel, target: float) -> float:
    """Find the tilt whose mean equals the target.

    The bracket grows geometrically by a factor 2 from t=0, capped just
    inside the log-MGF domain, then a Newton iteration refines the root and
    falls back on bisection whenever a step leaves the bracket.

    Args:
        model: The source model
        target: The mean target on the f scale

    Returns:
        t with |m(t) - target| <= 1e-10 max(1, |target|)

    Raises:
        TargetOutsideRange: If the target is not attained on the domain
        NoConvergence: If 200 iterations do not reach the tolerance
        NonconvexLogMGF: If the variance vanishes along the way
    """
    result, status = _solve(model, np.array([float(target)]))
    code = _Status(int(status[0]))
    if code is _Status.OUTSIDE_RANGE:
        raise TargetOutsideRange(target, detail=f"model {model.name!r}")
    if code is _Status.NONCONVEX:
        msg = f"The log-MGF of {model.name!r} is not strictly convex near the root."
        raise NonconvexLogMGF(msg)
    if code is _Status.NO_CONVERGENCE:
        msg = f"Inverting the mean of {model.name!r} at {target!r} did not converge."
        raise NoConvergence(msg)
    return float(result[0])


def invert_m_many(model: SourceModel, targets: ArrayLike) -> NDArray[np.float64]:
    """Invert the mean function elementwise.

    Args:
        model: The source model
        targets: Mean targets of any shape

    Returns:
        The tilts, NaN where a target cannot be inverted
    """
    values = np.asarray(targets, dtype=np.float64)
    result, status = _solve(model, values.ravel())
    failures = int(np.count_nonzero(status != _Status.CONVERGED))
    if failures:
        logger.debug("%d of %d mean targets could not be inverted", failures, values.size)
    return result.reshape(values.shape)


def incremental_t_update(prev: CumulantPoint, x_i: float, n: int, i: int) -> float:
    """Advance the tilt by one step without solving for it.

    This is the one-step Newton proxy of the exact inversion, using the
    observed f-value of the latest increment.

    Args:
        prev: The cumulants at the previous tilt
        x_i: f of the increment observed at step i
        n: The walk length
        i: The step index, 1 <= i <= n - 2

    Returns:
        The proxy tilt for step i
    """
    return prev.t + (prev.m - x_i) / ((n - i) * prev.s2)


def epsilon_n(n: int, k: int) -> float:
    """Return the accuracy sequence log(n) / sqrt(n - k).

    Args:
        n: The walk length
        k: The run length

    Returns:
        The value of the sequence
    """
    return math.log(n) / math.sqrt(n - k)


@dataclass(frozen=True)
class RegimeCheck:
    """One surrogate of the asymptotic regime conditions.

    Attributes:
        name: Short identifier
        description: What the surrogate measures
        value: The surrogate value
        ok: Whether it sits on the favourable side of 1
    """

    name: str
    description: str
    value: float
    ok: bool

    @property
    def flag(self) -> str:
        """OK or WARN."""
        return "OK" if self.ok else "WARN"


@dataclass(frozen=True)
class RegimeDiagnostics:
    """Advisory report on how far a run sits from its asymptotic regime.

    Attributes:
        n: The walk length
        k: The run length
        a: The standardized level
        eps_n: The accuracy sequence
        e2_margin: (n - k) / (log n) ** 6, large when the rate condition holds
        checks: The surrogate checks
    """

    n: int
    k: int
    a: float
    eps_n: float
    e2_margin: float
    checks: tuple[RegimeCheck, ...]

    @property
    def all_ok(self) -> bool:
        """Whether every surrogate is flagged OK."""
        return all(check.ok for check in self.checks)

    def check(self, name: str) -> RegimeCheck:
        """Look up a surrogate by name.

        Args:
            name: The surrogate identifier

        Returns:
            The check

        Raises:
            KeyError: If no such surrogate exists
        """
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)


def check_regime(n: int, k: int, a: float) -> RegimeDiagnostics:
    """Report the regime surrogates for a run; never blocks execution.

    Args:
        n: The walk length
        k: The run length, 1 <= k < n
        a: The standardized level, positive

    Returns:
        The diagnostics

    Raises:
        ConfigError: If the arguments are out of range
    """
    if not 1 <= k < n:
        msg = f"Regime checks need 1 <= k < n, got n={n}, k={k}."
        raise ConfigError(msg)
    if not a > 0.0:
        msg = f"Regime checks need a > 0, got {a!r}."
        raise ConfigError(msg)
    eps = epsilon_n(n, k)
    log_n = math.log(n)
    rate = eps * log_n**2
    growth = eps * math.sqrt(n - k)
    deviation = a * a / rate
    level = math.sqrt(n) * a * a / log_n**2
    checks = (
        RegimeCheck("e1", "eps_n * sqrt(n - k), should grow", growth, growth >= 1.0),
        RegimeCheck("e2", "eps_n * (log n)^2, should vanish", rate, rate < 1.0),
        RegimeCheck(
            "deviation",
            "a^2 / (eps_n (log n)^2), should grow",
            deviation,
            deviation >= 1.0,
        ),
        RegimeCheck("level", "sqrt(n) a^2 / (log n)^2, should grow", level, level >= 1.0),
    )
    diagnostics = RegimeDiagnostics(
        n=n,
        k=k,
        a=a,
        eps_n=eps,
        e2_margin=(n - k) / log_n**6,
        checks=checks,
    )
    for check in checks:
        logger.debug("Regime %s = %.6g (%s)", check.name, check.value, check.flag)
    return diagnostics
