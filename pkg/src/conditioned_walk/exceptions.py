"""Errors raised by the conditioned walk library."""

from __future__ import annotations


class ConditionedWalkError(Exception):
    """Base class for all library errors."""


class ConfigError(ConditionedWalkError):
    """An experiment description is invalid or cannot be loaded."""


class NumericalError(ConditionedWalkError):
    """A numerical routine could not produce a trustworthy value."""


class TiltOutOfDomain(NumericalError):  # noqa: N818
    """A tilt parameter lies outside the domain of the log-MGF."""

    def __init__(self, t: float, domain: tuple[float, float]) -> None:
        """Initialize the error.

        Args:
            t: The offending tilt
            domain: The open domain of the log-MGF
        """
        self.t = t
        self.domain = domain
        super().__init__(f"Tilt {t!r} is outside the log-MGF domain {domain}.")


class NonconvexLogMGF(NumericalError):  # noqa: N818
    """The second derivative of the log-MGF is not positive."""


class TargetOutsideRange(NumericalError):  # noqa: N818
    """A mean target is not attained by the tilted family.

    Attributes:
        target: The mean that was requested
        step: The step index of the path, when known
    """

    def __init__(self, target: float, step: int | None = None, detail: str = "") -> None:
        """Initialize the error.

        Args:
            target: The mean that was requested
            step: The step index of the path, when known
            detail: Additional context
        """
        self.target = target
        self.step = step
        msg = f"Mean target {target!r} is outside the attainable range"
        if step is not None:
            msg += f" at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg + ".")

    def at_step(self, step: int) -> TargetOutsideRange:
        """Return a copy of the error tagged with a step index.

        Args:
            step: The step index

        Returns:
            The tagged error
        """
        return TargetOutsideRange(self.target, step=step)


class NoConvergence(NumericalError):  # noqa: N818
    """An iterative solver ran out of iterations."""


class DegenerateEstimate(NumericalError):  # noqa: N818
    """A Monte Carlo estimate has no usable samples."""


class EnvelopeFailure(NumericalError):  # noqa: N818
    """A rejection sampler accepts too rarely to be useful."""


class CapReachedError(ConditionedWalkError):
    """The run length scan hit its cap without certifying the budget.

    Only the command line raises this, the library reports it as a flag.
    """
