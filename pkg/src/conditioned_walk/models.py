"""Source laws of the walk increments.

A source model bundles the density ``p`` of one increment ``X``, the
conditioning function ``f`` and the log moment generating function
``psi(t) = log E exp(t f(X))`` together with its domain.
"""

from __future__ import annotations

import importlib
import logging
import math

from abc import ABC, abstractmethod
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np

from scipy import stats

from .exceptions import ConfigError


if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import ArrayLike, NDArray


logger = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Central difference stencils: offsets (in units of h) and weights.
_STENCILS: dict[int, tuple[tuple[int, ...], tuple[float, ...]]] = {
    1: ((1, -1), (0.5, -0.5)),
    2: ((1, 0, -1), (1.0, -2.0, 1.0)),
    3: ((2, 1, -1, -2), (0.5, -1.0, 1.0, -0.5)),
    4: ((2, 1, 0, -1, -2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


def _central_difference(
    func: Callable[[float], float],
    t: float,
    order: int,
    h: float,
) -> float:
    offsets, weights = _STENCILS[order]
    total = math.fsum(w * func(t + o * h) for o, w in zip(offsets, weights, strict=True))
    return total / h**order


def finite_difference_derivatives(
    func: Callable[[float], float],
    t: float,
    domain: tuple[float, float],
) -> tuple[float, float, float, float]:
    """Differentiate a log-MGF four times at one point.

    The first derivative uses the step ``h = max(1e-6, 1e-6 |t|)``; the
    derivative of order ``j`` uses ``h ** (1 / j)`` so that every stencil
    divides by the same power of ten. Each estimate is refined by one
    Richardson extrapolation step.

    Args:
        func: The scalar log-MGF
        t: The evaluation point, inside the domain
        domain: The open domain of ``func``

    Returns:
        The first four derivatives of ``func`` at ``t``
    """
    base = max(1e-6, 1e-6 * abs(t))
    room = min(t - domain[0], domain[1] - t)
    derivatives = []
    for order in (1, 2, 3, 4):
        h = base ** (1.0 / order)
        # the widest stencil reaches 2h
        h = min(h, room / 4.0)
        coarse = _central_difference(func, t, order, h)
        fine = _central_difference(func, t, order, h / 2.0)
        derivatives.append((4.0 * fine - coarse) / 3.0)
    return derivatives[0], derivatives[1], derivatives[2], derivatives[3]


def identity(x: ArrayLike) -> NDArray[np.float64]:
    """The identity conditioning function.

    Args:
        x: Increment values

    Returns:
        The values as a float array
    """
    return np.asarray(x, dtype=np.float64)


def square(x: ArrayLike) -> NDArray[np.float64]:
    """The square conditioning function.

    Args:
        x: Increment values

    Returns:
        The squared values
    """
    values = np.asarray(x, dtype=np.float64)
    return values * values


def _standard_normal_log_density(x: ArrayLike) -> NDArray[np.float64]:
    values = np.asarray(x, dtype=np.float64)
    return -0.5 * values * values - LOG_SQRT_2PI


class SourceModel(ABC):
    """The law of one increment together with its conditioning function.

    Attributes:
        name: Identifier used by config files and the command line
        t_domain: Open interval on which the log-MGF is finite
        support: Open interval carrying the density of X
        density_bound: Finite supremum of the density, if known
        f_is_identity: Whether the conditioning function is the identity
        exact_product: Whether the per-step product density is the exact conditional law
    """

    name: str = ""
    t_domain: tuple[float, float] = (-math.inf, math.inf)
    support: tuple[float, float] = (-math.inf, math.inf)
    density_bound: float | None = None
    f_is_identity: bool = True
    exact_product: bool = False

    @abstractmethod
    def log_density(self, x: ArrayLike) -> NDArray[np.float64]:
        """Evaluate log p, returning -inf off the support.

        Args:
            x: Points to evaluate
        """

    @abstractmethod
    def log_mgf(self, t: ArrayLike) -> NDArray[np.float64]:
        """Evaluate the log moment generating function of f(X).

        Args:
            t: Tilt parameters inside the domain
        """

    def f(self, x: ArrayLike) -> NDArray[np.float64]:
        """Apply the conditioning function.

        Args:
            x: Increment values

        Returns:
            f evaluated elementwise
        """
        return identity(x)

    def derivatives(
        self,
        t: ArrayLike,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Return the first four derivatives of the log-MGF.

        Models without closed forms fall back on finite differences.

        Args:
            t: Tilt parameters inside the domain

        Returns:
            psi', psi'', psi''' and psi'''' with the shape of ``t``
        """
        points = np.asarray(t, dtype=np.float64)

        def scalar_mgf(value: float) -> float:
            return float(self.log_mgf(value))

        flat = [
            finite_difference_derivatives(scalar_mgf, float(value), self.t_domain)
            for value in points.ravel()
        ]
        table = np.asarray(flat, dtype=np.float64).reshape(*points.shape, 4)
        return table[..., 0], table[..., 1], table[..., 2], table[..., 3]

    @cached_property
    def mu(self) -> float:
        """Mean of f(X)."""
        return float(self.derivatives(0.0)[0])

    @cached_property
    def sigma2(self) -> float:
        """Variance of f(X)."""
        return float(self.derivatives(0.0)[1])

    @property
    def sigma(self) -> float:
        """Standard deviation of f(X)."""
        return math.sqrt(self.sigma2)

    def level(self, a: float) -> float:
        """Convert a standardized level to the f scale.

        Args:
            a: The standardized conditioning level

        Returns:
            sigma * a + mu
        """
        return self.sigma * a + self.mu

    @property
    def has_sampler(self) -> bool:
        """Whether exact draws from p are available."""
        return False

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Draw from p.

        Args:
            rng: Random stream
            size: Number of draws

        Raises:
            NotImplementedError: When the model has no sampler
        """
        msg = f"Model {self.name!r} has no sampler for its density."
        raise NotImplementedError(msg)

    @property
    def has_tilted_sampler(self) -> bool:
        """Whether exact draws from the tilted family are available."""
        return False

    def sample_tilted(
        self,
        t: float,
        rng: np.random.Generator,
        size: int,
    ) -> NDArray[np.float64]:
        """Draw from the tilted density at tilt t.

        Args:
            t: The tilt
            rng: Random stream
            size: Number of draws

        Raises:
            NotImplementedError: When the model has no tilted sampler
        """
        msg = f"Model {self.name!r} has no sampler for its tilted family."
        raise NotImplementedError(msg)

    def tilted_cdf(self, t: float, x: ArrayLike) -> NDArray[np.float64] | None:  # noqa: ARG002
        """Return the CDF of X under the tilted density, if known.

        Args:
            t: The tilt
            x: Points to evaluate

        Returns:
            The CDF values, or None without a closed form
        """
        return None

    def tilted_scale(self, t: float) -> float:
        """Return the standard deviation of X under the tilted density.

        Args:
            t: The tilt

        Returns:
            The spread used to scale random walk proposals
        """
        return math.sqrt(float(self.derivatives(t)[1]))

    def start_point(self, level: float) -> float:
        """Return a point with positive density near the bulk of the tilted law.

        Args:
            level: The mean target on the f scale

        Returns:
            A starting state for Markov chains
        """
        lo, hi = self.support
        start = level if self.f_is_identity else 0.0
        if start <= lo:
            start = lo + 1.0 if math.isinf(hi) else (lo + hi) / 2.0
        if start >= hi:
            start = hi - 1.0 if math.isinf(lo) else (lo + hi) / 2.0
        return start

    def describe(self) -> dict[str, Any]:
        """Return the model as config data.

        Returns:
            The model section of an experiment config
        """
        return {"name": self.name, "f": "id" if self.f_is_identity else "square"}


class NormalModel(SourceModel):
    """Standard normal increments conditioned on their sum."""

    name = "normal"
    density_bound = 1.0 / math.sqrt(2.0 * math.pi)
    exact_product = True

    def log_density(self, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return _standard_normal_log_density(x)

    def log_mgf(self, t: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        values = np.asarray(t, dtype=np.float64)
        return 0.5 * values * values

    def derivatives(  # noqa: D102
        self,
        t: ArrayLike,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        values = np.asarray(t, dtype=np.float64)
        zeros = np.zeros_like(values)
        return values.copy(), np.ones_like(values), zeros, zeros.copy()

    @property
    def has_sampler(self) -> bool:  # noqa: D102
        return True

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:  # noqa: D102
        return rng.standard_normal(size)

    @property
    def has_tilted_sampler(self) -> bool:  # noqa: D102
        return True

    def sample_tilted(  # noqa: D102
        self,
        t: float,
        rng: np.random.Generator,
        size: int,
    ) -> NDArray[np.float64]:
        return t + rng.standard_normal(size)

    def tilted_cdf(self, t: float, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return np.asarray(stats.norm.cdf(x, loc=t), dtype=np.float64)


class CenteredExponentialModel(SourceModel):
    """Unit exponential increments shifted to mean zero.

    The tilted law at ``t < 1`` is again exponential, with rate ``1 - t``,
    shifted by ``-1``.
    """

    name = "centered_exponential"
    t_domain = (-math.inf, 1.0)
    support = (-1.0, math.inf)
    density_bound = 1.0

    def log_density(self, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        values = np.asarray(x, dtype=np.float64)
        return np.where(values > -1.0, -(values + 1.0), -np.inf)

    def log_mgf(self, t: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        values = np.asarray(t, dtype=np.float64)
        return -values - np.log1p(-values)

    def derivatives(  # noqa: D102
        self,
        t: ArrayLike,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        inv = 1.0 / (1.0 - np.asarray(t, dtype=np.float64))
        inv2 = inv * inv
        return inv - 1.0, inv2, 2.0 * inv2 * inv, 6.0 * inv2 * inv2

    @property
    def has_sampler(self) -> bool:  # noqa: D102
        return True

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:  # noqa: D102
        return rng.standard_exponential(size) - 1.0

    @property
    def has_tilted_sampler(self) -> bool:  # noqa: D102
        return True

    def sample_tilted(  # noqa: D102
        self,
        t: float,
        rng: np.random.Generator,
        size: int,
    ) -> NDArray[np.float64]:
        return rng.standard_exponential(size) / (1.0 - t) - 1.0

    def tilted_cdf(self, t: float, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        shifted = np.asarray(x, dtype=np.float64) + 1.0
        return np.asarray(stats.expon.cdf(shifted, scale=1.0 / (1.0 - t)), dtype=np.float64)


class NormalSquareModel(SourceModel):
    """Standard normal increments conditioned on the sum of their squares.

    Tilting ``x**2`` by ``t < 1/2`` gives the centered normal law with
    variance ``1 / (1 - 2t)``, which is also its f-mean.
    """

    name = "normal_square"
    t_domain = (-math.inf, 0.5)
    density_bound = 1.0 / math.sqrt(2.0 * math.pi)
    f_is_identity = False

    def log_density(self, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return _standard_normal_log_density(x)

    def f(self, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return square(x)

    def log_mgf(self, t: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return -0.5 * np.log1p(-2.0 * np.asarray(t, dtype=np.float64))

    def derivatives(  # noqa: D102
        self,
        t: ArrayLike,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        inv = 1.0 / (1.0 - 2.0 * np.asarray(t, dtype=np.float64))
        inv2 = inv * inv
        return inv, 2.0 * inv2, 8.0 * inv2 * inv, 48.0 * inv2 * inv2

    @property
    def has_sampler(self) -> bool:  # noqa: D102
        return True

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:  # noqa: D102
        return rng.standard_normal(size)

    @property
    def has_tilted_sampler(self) -> bool:  # noqa: D102
        return True

    def sample_tilted(  # noqa: D102
        self,
        t: float,
        rng: np.random.Generator,
        size: int,
    ) -> NDArray[np.float64]:
        return rng.standard_normal(size) * math.sqrt(1.0 / (1.0 - 2.0 * t))

    def tilted_cdf(self, t: float, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        scale = math.sqrt(1.0 / (1.0 - 2.0 * t))
        return np.asarray(stats.norm.cdf(x, scale=scale), dtype=np.float64)

    def tilted_scale(self, t: float) -> float:  # noqa: D102
        return math.sqrt(1.0 / (1.0 - 2.0 * t))


def load_callable(reference: str) -> Callable[..., Any]:
    """Import a callable from a ``module:attribute`` reference.

    Args:
        reference: The import reference

    Returns:
        The referenced callable

    Raises:
        ConfigError: If the reference cannot be resolved
    """
    module_name, _, attribute = reference.partition(":")
    if not module_name or not attribute:
        msg = f"Plugin reference {reference!r} must look like 'package.module:attribute'."
        raise ConfigError(msg)
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        msg = f"Plugin module {module_name!r} could not be imported: {exc}"
        raise ConfigError(msg) from exc
    target = module
    for part in attribute.split("."):
        try:
            target = getattr(target, part)
        except AttributeError as exc:
            msg = f"Plugin module {module_name!r} has no attribute {attribute!r}."
            raise ConfigError(msg) from exc
    if not callable(target):
        msg = f"Plugin reference {reference!r} is not callable."
        raise ConfigError(msg)
    return target


class PluginModel(SourceModel):
    """A user supplied model loaded from import references.

    The plugin mapping accepts the keys ``log_density``, ``log_mgf``
    (required), ``f``, ``derivatives``, ``sampler``, ``tilted_sampler``
    (optional import references) and ``t_domain``, ``support``,
    ``density_bound`` (optional numbers).
    """

    name = "custom"

    def __init__(self, plugin: dict[str, Any], f: str = "id") -> None:
        """Load the plugin callables.

        Args:
            plugin: The plugin mapping from the experiment config
            f: The conditioning function used when the plugin has none

        Raises:
            ConfigError: If a required entry is missing or invalid
        """
        self.plugin = dict(plugin)
        for key in ("log_density", "log_mgf"):
            if key not in self.plugin:
                msg = f"A custom model needs a plugin entry for {key!r}."
                raise ConfigError(msg)
        self._log_density = load_callable(self.plugin["log_density"])
        self._log_mgf = load_callable(self.plugin["log_mgf"])
        self._derivatives = (
            load_callable(self.plugin["derivatives"]) if "derivatives" in self.plugin else None
        )
        self._sampler = load_callable(self.plugin["sampler"]) if "sampler" in self.plugin else None
        self._tilted_sampler = (
            load_callable(self.plugin["tilted_sampler"])
            if "tilted_sampler" in self.plugin
            else None
        )
        self._f_choice = f
        if "f" in self.plugin:
            self._f = load_callable(self.plugin["f"])
            self.f_is_identity = False
        elif f == "square":
            self._f = square
            self.f_is_identity = False
        else:
            self._f = identity
        self.t_domain = _interval(self.plugin.get("t_domain"), "t_domain")
        self.support = _interval(self.plugin.get("support"), "support")
        bound = self.plugin.get("density_bound")
        self.density_bound = None if bound is None else float(bound)
        self._validate()

    def _validate(self) -> None:
        lo, hi = self.t_domain
        if not lo < 0.0 < hi:
            msg = f"The plugin t_domain {self.t_domain} must contain 0."
            raise ConfigError(msg)
        at_zero = float(self.log_mgf(0.0))
        if abs(at_zero) > 1e-10:  # noqa: PLR2004
            msg = f"The plugin log-MGF must vanish at 0, got {at_zero!r}."
            raise ConfigError(msg)
        if not self.sigma2 > 0.0:
            msg = "The plugin log-MGF must have a positive second derivative at 0."
            raise ConfigError(msg)

    def log_density(self, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return np.asarray(self._log_density(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def log_mgf(self, t: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return np.asarray(self._log_mgf(t), dtype=np.float64)

    def f(self, x: ArrayLike) -> NDArray[np.float64]:  # noqa: D102
        return np.asarray(self._f(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def derivatives(  # noqa: D102
        self,
        t: ArrayLike,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        if self._derivatives is None:
            return super().derivatives(t)
        values = np.asarray(t, dtype=np.float64)
        d1, d2, d3, d4 = self._derivatives(values)
        return (
            np.broadcast_to(np.asarray(d1, dtype=np.float64), values.shape).copy(),
            np.broadcast_to(np.asarray(d2, dtype=np.float64), values.shape).copy(),
            np.broadcast_to(np.asarray(d3, dtype=np.float64), values.shape).copy(),
            np.broadcast_to(np.asarray(d4, dtype=np.float64), values.shape).copy(),
        )

    @property
    def has_sampler(self) -> bool:  # noqa: D102
        return self._sampler is not None

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:  # noqa: D102
        if self._sampler is None:
            return super().sample(rng, size)
        return np.asarray(self._sampler(rng, size), dtype=np.float64)

    @property
    def has_tilted_sampler(self) -> bool:  # noqa: D102
        return self._tilted_sampler is not None

    def sample_tilted(  # noqa: D102
        self,
        t: float,
        rng: np.random.Generator,
        size: int,
    ) -> NDArray[np.float64]:
        if self._tilted_sampler is None:
            return super().sample_tilted(t, rng, size)
        return np.asarray(self._tilted_sampler(t, rng, size), dtype=np.float64)

    def describe(self) -> dict[str, Any]:  # noqa: D102
        return {"name": self.name, "f": self._f_choice}


def _interval(value: Any, label: str) -> tuple[float, float]:  # noqa: ANN401
    if value is None:
        return (-math.inf, math.inf)
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        msg = f"Plugin {label} must be a pair of numbers, got {value!r}."
        raise ConfigError(msg) from exc
    if not lo < hi:
        msg = f"Plugin {label} must be an open interval with lower < upper, got {value!r}."
        raise ConfigError(msg)
    return (lo, hi)


BUILTIN_MODELS: dict[str, type[SourceModel]] = {
    "normal": NormalModel,
    "centered_exponential": CenteredExponentialModel,
    "normal_square": NormalSquareModel,
}

MODEL_NAMES = (*BUILTIN_MODELS, "custom")


def build_model(
    name: str,
    f: str = "id",
    plugin: dict[str, Any] | None = None,
) -> SourceModel:
    """Build a source model from its config identifiers.

    Args:
        name: One of the built-in model names or ``custom``
        f: The conditioning function, ``id`` or ``square``
        plugin: The plugin mapping for ``custom`` models

    Returns:
        The source model

    Raises:
        ConfigError: For unknown names or unsupported combinations
    """
    if f not in ("id", "square"):
        msg = f"Unknown conditioning function {f!r}, expected 'id' or 'square'."
        raise ConfigError(msg)
    if name == "custom":
        if not plugin:
            msg = "The custom model needs a plugin mapping in the config file."
            raise ConfigError(msg)
        return PluginModel(plugin, f=f)
    if name == "normal" and f == "square":
        return NormalSquareModel()
    if name not in BUILTIN_MODELS:
        msg = f"Unknown model {name!r}, expected one of {', '.join(MODEL_NAMES)}."
        raise ConfigError(msg)
    model = BUILTIN_MODELS[name]()
    if f == "square" and model.f_is_identity:
        msg = f"The model {name!r} has no finite log-MGF for f(x)=x**2 near 0."
        raise ConfigError(msg)
    logger.debug("Built source model %s", name)
    return model
