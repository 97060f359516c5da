"""Experiment configuration for conditioned-walk.

Values are layered: built-in defaults, then a named preset, then a YAML file,
then command line flags. The merged result is written back into every run
manifest so an archived manifest reproduces the run.
"""

from __future__ import annotations

import copy
import logging
import types

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import TYPE_CHECKING, Any, get_args, get_origin, get_type_hints

import yaml

from .accuracy import DEFAULT_DELTA, DEFAULT_L, BlockSource
from .exceptions import ConfigError
from .models import MODEL_NAMES, build_model
from .oracles import Quantile, matched_level
from .run_density import (
    DEFAULT_MC_BUDGET,
    DEFAULT_REFRESH,
    BetaForm,
    FirstStep,
    Inversion,
    MeanAnchor,
    NormalizingMethod,
    RunSpec,
)
from .sampler import DEFAULT_MH_BURN_IN, DEFAULT_RETRIES, Kernel, SamplerOptions


if TYPE_CHECKING:
    from argparse import Namespace

    from .models import SourceModel
    from .output import Output
    from .utils import TermFeatures


_logger = logging.getLogger(__name__)


@dataclass
class ModelSection:
    """The source model.

    Attributes:
        name: Model identifier
        f: Conditioning function, id or square
        plugin: Import references and numbers of a custom model
    """

    name: str = "normal"
    f: str = "id"
    plugin: dict[str, Any] | None = None


@dataclass
class RunSection:  # pylint: disable=too-many-instance-attributes
    """The walk, the conditioning level and the density variants.

    Attributes:
        n: Walk length
        k: Run length
        a: Standardized level, takes precedence over pvalue
        pvalue: Tail probability the level is matched to
        quantile: Rule matching pvalue to a level
        anchor: Anchor of the Gaussian factor
        first_step: Law of the first increment
        inversion: Exact or incremental tilts
        refresh: Steps between exact re-solves of incremental tilts
        beta_form: Variance power in beta
        seed: Reproducibility seed
    """

    n: int = 100
    k: int = 90
    a: float | None = None
    pvalue: float | None = 1e-2
    quantile: str = Quantile.GAUSSIAN.value
    anchor: str = MeanAnchor.MI.value
    first_step: str = FirstStep.PRODUCT.value
    inversion: str = Inversion.EXACT.value
    refresh: int = DEFAULT_REFRESH
    beta_form: str = BetaForm.S4.value
    seed: int = 0


@dataclass
class NormalizingSection:
    """Step normalizing constants.

    Attributes:
        method: auto, monte_carlo or quadrature
        mc_budget: Draws per Monte Carlo constant
    """

    method: str = NormalizingMethod.AUTO.value
    mc_budget: int = DEFAULT_MC_BUDGET


@dataclass
class SamplerSection:
    """Path sampling.

    Attributes:
        kernel: Increment sampler
        paths: Number of runs to draw
        mh_burn_in: Metropolis-Hastings steps per increment
        mh_scale: Multiplier of the tilted standard deviation for MH
        retries: Redraws after a run leaves the attainable range
        workers: Worker processes
    """

    kernel: str = Kernel.AUTO.value
    paths: int = 5
    mh_burn_in: int = DEFAULT_MH_BURN_IN
    mh_scale: float = 1.0
    retries: int = DEFAULT_RETRIES
    workers: int = 1


@dataclass
class AccuracySection:
    """Relative error certification.

    Attributes:
        L: Number of blocks
        delta: Relative error budget
        stride: Grid step of the run length scan, automatic when unset
        block_source: Law of the blocks, p_x or h
        k_values: Run lengths of the accuracy curve, a scan up to k when unset
    """

    L: int = DEFAULT_L  # noqa: N815
    delta: float = DEFAULT_DELTA
    stride: int | None = None
    block_source: str = BlockSource.P_X.value
    k_values: list[int] | None = None


@dataclass
class OutputSection:
    """Artifacts.

    Attributes:
        out: Output directory
        plot: Whether to write SVG figures
        bins: Histogram bins
    """

    out: str = "cwalk-out"
    plot: bool = False
    bins: int = 50


_CHOICES: dict[tuple[str, str], tuple[str, ...]] = {
    ("model", "f"): ("id", "square"),
    ("run", "quantile"): tuple(member.value for member in Quantile),
    ("run", "anchor"): tuple(member.value for member in MeanAnchor),
    ("run", "first_step"): tuple(member.value for member in FirstStep),
    ("run", "inversion"): tuple(member.value for member in Inversion),
    ("run", "beta_form"): tuple(member.value for member in BetaForm),
    ("normalizing", "method"): tuple(member.value for member in NormalizingMethod),
    ("sampler", "kernel"): tuple(member.value for member in Kernel),
    ("accuracy", "block_source"): tuple(member.value for member in BlockSource),
}


def _check_type(name: str, hint: Any, value: Any) -> Any:  # noqa: ANN401, PLR0911
    """Check a value against a section field annotation, widening int to float."""
    args = get_args(hint)
    if isinstance(hint, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = next(arg for arg in args if arg is not type(None))
        return _check_type(name, inner, value)
    origin = get_origin(hint) or hint
    if origin is float and isinstance(value, int | float) and not isinstance(value, bool):
        return float(value)
    if origin is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if origin is list and isinstance(value, list) and all(
        isinstance(item, int) and not isinstance(item, bool) for item in value
    ):
        return value
    if origin in (str, bool, dict) and isinstance(value, origin):
        return value
    msg = f"{name} has the wrong type: {value!r}."
    raise ConfigError(msg)


@dataclass
class ExperimentConfig:
    """Every parameter of an experiment, grouped as in the YAML file.

    Attributes:
        model: The source model
        run: The walk and density variants
        normalizing: Step normalizing constants
        sampler: Path sampling
        accuracy: Relative error certification
        output: Artifacts
    """

    model: ModelSection = field(default_factory=ModelSection)
    run: RunSection = field(default_factory=RunSection)
    normalizing: NormalizingSection = field(default_factory=NormalizingSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    accuracy: AccuracySection = field(default_factory=AccuracySection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict[str, Any]:
        """Serialize the configuration.

        Returns:
            Nested plain data
        """
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        """Build a configuration, filling missing keys with defaults.

        Args:
            data: Nested plain data

        Returns:
            The configuration

        Raises:
            ConfigError: On unknown keys, bad choices or bad types
        """
        if not isinstance(data, dict):
            msg = f"The configuration must be a mapping, got {type(data).__name__}."
            raise ConfigError(msg)
        sections = {section.name for section in fields(cls)}
        unknown = set(data) - sections
        if unknown:
            msg = f"Unknown configuration sections: {', '.join(sorted(unknown))}."
            raise ConfigError(msg)
        built = {}
        for section in fields(cls):
            section_cls = _SECTION_TYPES[section.name]
            values = data.get(section.name) or {}
            if not isinstance(values, dict):
                msg = f"Section {section.name!r} must be a mapping."
                raise ConfigError(msg)
            known = {item.name for item in fields(section_cls)}
            extra = set(values) - known
            if extra:
                msg = f"Unknown keys in section {section.name!r}: {', '.join(sorted(extra))}."
                raise ConfigError(msg)
            hints = get_type_hints(section_cls)
            checked = {}
            for key, value in values.items():
                choices = _CHOICES.get((section.name, key))
                if choices and value not in choices:
                    msg = (
                        f"{section.name}.{key} must be one of {', '.join(choices)}, got {value!r}."
                    )
                    raise ConfigError(msg)
                checked[key] = _check_type(
                    f"{section.name}.{key}",
                    hints[key],
                    copy.deepcopy(value),
                )
            built[section.name] = section_cls(**checked)
        config = cls(**built)
        config.validate()
        return config

    def validate(self) -> None:
        """Check values that do not depend on the model.

        Raises:
            ConfigError: On an invalid value
        """
        if self.model.name not in MODEL_NAMES:
            msg = f"Unknown model {self.model.name!r}; choose one of {', '.join(MODEL_NAMES)}."
            raise ConfigError(msg)
        if self.run.a is None and self.run.pvalue is None:
            msg = "Either run.a or run.pvalue must be set."
            raise ConfigError(msg)
        if self.sampler.paths < 1:
            msg = f"sampler.paths must be positive, got {self.sampler.paths}."
            raise ConfigError(msg)
        if self.output.bins < 1:
            msg = f"output.bins must be positive, got {self.output.bins}."
            raise ConfigError(msg)

    def build_model(self) -> SourceModel:
        """Return the configured source model.

        Returns:
            The model
        """
        return build_model(self.model.name, f=self.model.f, plugin=self.model.plugin)

    def level_a(self) -> float:
        """Return the standardized level, matching pvalue when a is unset.

        Returns:
            The level a
        """
        if self.run.a is not None:
            return float(self.run.a)
        assert self.run.pvalue is not None  # noqa: S101
        return matched_level(
            self.model.name,
            self.run.n,
            self.run.pvalue,
            Quantile(self.run.quantile),
            f=self.model.f,
        )

    def run_spec(self, model: SourceModel | None = None) -> RunSpec:
        """Return the run description.

        Args:
            model: A model already built from this configuration

        Returns:
            The run description
        """
        return RunSpec(
            n=self.run.n,
            k=self.run.k,
            a=self.level_a(),
            model=model or self.build_model(),
            mean_anchor=MeanAnchor(self.run.anchor),
            mc_budget_c=self.normalizing.mc_budget,
            inversion=Inversion(self.run.inversion),
            seed=self.run.seed,
            first_step=FirstStep(self.run.first_step),
            beta_form=BetaForm(self.run.beta_form),
            normalizing=NormalizingMethod(self.normalizing.method),
            refresh=self.run.refresh,
        )

    def sampler_options(self) -> SamplerOptions:
        """Return the sampler tuning.

        Returns:
            The options
        """
        return SamplerOptions(
            kernel=Kernel(self.sampler.kernel),
            mh_burn_in=self.sampler.mh_burn_in,
            mh_scale=self.sampler.mh_scale,
            retries=self.sampler.retries,
            workers=self.sampler.workers,
        )


_SECTION_TYPES: dict[str, type[Any]] = {
    "model": ModelSection,
    "run": RunSection,
    "normalizing": NormalizingSection,
    "sampler": SamplerSection,
    "accuracy": AccuracySection,
    "output": OutputSection,
}

PRESETS: dict[str, dict[str, Any]] = {
    "normal-moderate": {"model": {"name": "normal"}, "run": {"n": 1000, "k": 999, "pvalue": 1e-2}},
    "normal-extreme": {"model": {"name": "normal"}, "run": {"n": 1000, "k": 999, "pvalue": 1e-8}},
    "exponential-moderate": {
        "model": {"name": "centered_exponential"},
        "run": {"n": 1000, "k": 900, "pvalue": 1e-2},
    },
    "exponential-extreme": {
        "model": {"name": "centered_exponential"},
        "run": {"n": 1000, "k": 900, "pvalue": 1e-8},
    },
    "square-moderate": {
        "model": {"name": "normal", "f": "square"},
        "run": {"n": 1000, "k": 900, "pvalue": 1e-2},
    },
}

# flag dest -> (section, key)
FLAG_KEYS: dict[str, tuple[str, str]] = {
    "model": ("model", "name"),
    "f": ("model", "f"),
    "n": ("run", "n"),
    "k": ("run", "k"),
    "a": ("run", "a"),
    "pvalue": ("run", "pvalue"),
    "quantile": ("run", "quantile"),
    "anchor": ("run", "anchor"),
    "first_step": ("run", "first_step"),
    "inversion": ("run", "inversion"),
    "refresh": ("run", "refresh"),
    "beta_form": ("run", "beta_form"),
    "seed": ("run", "seed"),
    "normalizing": ("normalizing", "method"),
    "mc_budget": ("normalizing", "mc_budget"),
    "kernel": ("sampler", "kernel"),
    "paths": ("sampler", "paths"),
    "mh_burn_in": ("sampler", "mh_burn_in"),
    "mh_scale": ("sampler", "mh_scale"),
    "retries": ("sampler", "retries"),
    "workers": ("sampler", "workers"),
    "L": ("accuracy", "L"),
    "delta": ("accuracy", "delta"),
    "stride": ("accuracy", "stride"),
    "block_source": ("accuracy", "block_source"),
    "k_values": ("accuracy", "k_values"),
    "out": ("output", "out"),
    "plot": ("output", "plot"),
    "bins": ("output", "bins"),
}


def merge(base: dict[str, Any], layer: dict[str, Any]) -> dict[str, Any]:
    """Overlay one configuration layer on another.

    Setting run.a in a layer clears the pvalue of the layers below, and the
    other way around.

    Args:
        base: Lower precedence data
        layer: Higher precedence data

    Returns:
        The merged data
    """
    merged = copy.deepcopy(base)
    for section, values in layer.items():
        if not isinstance(values, dict) or not isinstance(merged.get(section), dict):
            merged[section] = copy.deepcopy(values)
            continue
        target = merged[section]
        if section == "run":
            if values.get("a") is not None:
                target["pvalue"] = None
            if values.get("pvalue") is not None:
                target["a"] = None
        target.update(copy.deepcopy(values))
    return merged


def load_yaml(path: Path) -> dict[str, Any]:
    """Read a configuration file or a run manifest.

    Args:
        path: The file

    Returns:
        The configuration data

    Raises:
        ConfigError: If the file cannot be read or parsed
    """
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        msg = f"Cannot read configuration file {path}: {exc.strerror}."
        raise ConfigError(msg) from exc
    except yaml.YAMLError as exc:
        msg = f"Cannot parse configuration file {path}: {exc}"
        raise ConfigError(msg) from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        msg = f"Configuration file {path} must hold a mapping."
        raise ConfigError(msg)
    # run manifests nest the configuration
    if "config" in data and isinstance(data["config"], dict):
        return data["config"]
    return data


def dump_yaml(config: ExperimentConfig) -> str:
    """Serialize a configuration as YAML.

    Args:
        config: The configuration

    Returns:
        The YAML text
    """
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def parse_yaml(text: str) -> ExperimentConfig:
    """Parse a configuration from YAML text.

    Args:
        text: The YAML text

    Returns:
        The configuration
    """
    return ExperimentConfig.from_dict(yaml.safe_load(text) or {})


def flag_layer(args: Namespace) -> dict[str, Any]:
    """Collect the configuration keys given on the command line.

    Args:
        args: Parsed arguments, with unset flags suppressed

    Returns:
        A configuration layer
    """
    layer: dict[str, dict[str, Any]] = {}
    for dest, (section, key) in FLAG_KEYS.items():
        if hasattr(args, dest):
            layer.setdefault(section, {})[key] = getattr(args, dest)
    return layer


class Config:
    """The application configuration.

    Attributes:
        experiment: The merged experiment configuration
    """

    def __init__(
        self,
        args: Namespace,
        output: Output,
        term_features: TermFeatures,
    ) -> None:
        """Initialize the configuration.

        Args:
            args: The command line arguments
            output: The output object
            term_features: The terminal features
        """
        self.args: Namespace = args
        self._output: Output = output
        self.term_features: TermFeatures = term_features
        self.experiment: ExperimentConfig
        self.model: SourceModel
        self.spec: RunSpec

    def init(self) -> None:
        """Merge the configuration layers and build the run description.

        Raises:
            ConfigError: On an unknown preset or any invalid value
        """
        data = ExperimentConfig().to_dict()
        preset = getattr(self.args, "preset", None)
        if preset:
            if preset not in PRESETS:
                msg = f"Unknown preset {preset!r}; choose one of {', '.join(PRESETS)}."
                raise ConfigError(msg)
            data = merge(data, PRESETS[preset])
            self._output.debug(f"Applied preset: {preset}")
        config_file = getattr(self.args, "config", None)
        if config_file:
            path = Path(config_file).expanduser()
            data = merge(data, load_yaml(path))
            self._output.debug(f"Loaded configuration file: {path}")
        data = merge(data, flag_layer(self.args))
        self.experiment = ExperimentConfig.from_dict(data)
        self._output.debug(f"Resolved configuration:\n{dump_yaml(self.experiment)}")
        self.model = self.experiment.build_model()
        self.spec = self.experiment.run_spec(self.model)
        _logger.info(
            "Run: n=%d k=%d a=%.6g model=%s",
            self.spec.n,
            self.spec.k,
            self.spec.a,
            self.model.name,
        )

    @property
    def out_dir(self) -> Path:
        """Return the output directory, creating it if needed."""
        out = Path(self.experiment.output.out).expanduser()
        out.mkdir(parents=True, exist_ok=True)
        return out
