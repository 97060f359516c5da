"""Test the config module."""

from __future__ import annotations

import math

from argparse import Namespace
from typing import TYPE_CHECKING

import pytest
import yaml

from conditioned_walk.config import (
    PRESETS,
    Config,
    ExperimentConfig,
    dump_yaml,
    flag_layer,
    load_yaml,
    merge,
    parse_yaml,
)
from conditioned_walk.exceptions import ConfigError
from conditioned_walk.models import CenteredExponentialModel
from conditioned_walk.run_density import BetaForm, Inversion, MeanAnchor
from conditioned_walk.utils import TermFeatures


if TYPE_CHECKING:
    from pathlib import Path

    from conditioned_walk.output import Output


def test_defaults() -> None:
    """Test an empty mapping gives the defaults."""
    config = ExperimentConfig.from_dict({})
    assert config == ExperimentConfig()
    assert config.run.n == 100
    assert config.run.pvalue == 1e-2
    assert config.run.a is None
    assert config.accuracy.L == 1000


def test_yaml_round_trip() -> None:
    """Test a configuration survives YAML serialization."""
    config = ExperimentConfig.from_dict(
        {
            "model": {"name": "centered_exponential"},
            "run": {"n": 500, "k": 400, "a": 0.1, "pvalue": None, "anchor": "a"},
            "accuracy": {"k_values": [10, 20], "delta": 0.1},
            "output": {"plot": True},
        },
    )
    assert parse_yaml(dump_yaml(config)) == config


def test_int_widened_to_float() -> None:
    """Test integers are accepted for float fields."""
    config = ExperimentConfig.from_dict({"run": {"a": 1, "pvalue": None}})
    assert isinstance(config.run.a, float)


@pytest.mark.parametrize(
    ("data", "match"),
    (
        ({"runs": {}}, "Unknown configuration sections"),
        ({"run": {"length": 3}}, "Unknown keys"),
        ({"run": {"anchor": "middle"}}, "must be one of"),
        ({"run": {"n": "ten"}}, "wrong type"),
        ({"run": {"n": True}}, "wrong type"),
        ({"run": [1]}, "must be a mapping"),
        ({"model": {"name": "cauchy"}}, "Unknown model"),
        ({"run": {"a": None, "pvalue": None}}, "Either run.a or run.pvalue"),
        ({"sampler": {"paths": 0}}, "paths"),
        ({"output": {"bins": 0}}, "bins"),
    ),
    ids=(
        "section",
        "key",
        "choice",
        "type",
        "bool-for-int",
        "section-type",
        "model",
        "no-level",
        "paths",
        "bins",
    ),
)
def test_from_dict_errors(data: dict[str, object], match: str) -> None:
    """Test invalid configurations.

    Args:
        data: The configuration data
        match: Expected error text
    """
    with pytest.raises(ConfigError, match=match):
        ExperimentConfig.from_dict(data)


def test_merge_level_exclusive() -> None:
    """Test a and pvalue replace each other across layers."""
    base = ExperimentConfig().to_dict()
    with_a = merge(base, {"run": {"a": 0.2}})
    assert with_a["run"]["a"] == 0.2
    assert with_a["run"]["pvalue"] is None
    back = merge(with_a, {"run": {"pvalue": 1e-4}})
    assert back["run"]["a"] is None
    assert back["run"]["pvalue"] == 1e-4
    assert base["run"]["pvalue"] == 1e-2


def test_level_from_pvalue() -> None:
    """Test the level matched to a tail probability."""
    config = ExperimentConfig.from_dict({"run": {"n": 400, "pvalue": 0.05, "quantile": "gaussian"}})
    assert config.level_a() == pytest.approx(1.6448536269514722 / 20.0)


def test_run_spec() -> None:
    """Test the run description built from a configuration."""
    config = ExperimentConfig.from_dict(
        {
            "model": {"name": "centered_exponential"},
            "run": {
                "n": 200,
                "k": 150,
                "a": 0.3,
                "anchor": "a",
                "beta_form": "s2",
                "seed": 5,
                "inversion": "incremental",
                "refresh": 3,
            },
        },
    )
    spec = config.run_spec()
    assert isinstance(spec.model, CenteredExponentialModel)
    assert spec.a == 0.3
    assert spec.mean_anchor is MeanAnchor.A
    assert spec.beta_form is BetaForm.S2
    assert spec.seed == 5
    assert spec.inversion is Inversion.INCREMENTAL
    assert spec.refresh == 3
    options = config.sampler_options()
    assert options.retries == config.sampler.retries


def test_load_yaml_manifest(tmp_path: Path) -> None:
    """Test a run manifest is read back as its configuration.

    Args:
        tmp_path: Pytest fixture.
    """
    manifest = tmp_path / "manifest.yml"
    manifest.write_text(
        yaml.safe_dump({"command": "sample", "config": {"run": {"n": 300}}, "results": {}}),
        encoding="utf-8",
    )
    assert load_yaml(manifest) == {"run": {"n": 300}}


@pytest.mark.parametrize(
    ("content", "match"),
    (("- 1\n- 2\n", "must hold a mapping"), ("run: [1,\n", "Cannot parse")),
    ids=("list", "syntax"),
)
def test_load_yaml_errors(tmp_path: Path, content: str, match: str) -> None:
    """Test unreadable configuration files.

    Args:
        tmp_path: Pytest fixture.
        content: The file content
        match: Expected error text
    """
    path = tmp_path / "bad.yml"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError, match=match):
        load_yaml(path)
    with pytest.raises(ConfigError, match="Cannot read"):
        load_yaml(tmp_path / "missing.yml")


def test_load_yaml_empty(tmp_path: Path) -> None:
    """Test an empty file is an empty layer.

    Args:
        tmp_path: Pytest fixture.
    """
    path = tmp_path / "empty.yml"
    path.write_text("", encoding="utf-8")
    assert load_yaml(path) == {}


def test_flag_layer() -> None:
    """Test only flags present on the namespace become config keys."""
    layer = flag_layer(
        Namespace(n=50, refresh=0, L=200, plot=True, subcommand="sample", verbose=0),
    )
    assert layer == {
        "run": {"n": 50, "refresh": 0},
        "accuracy": {"L": 200},
        "output": {"plot": True},
    }


def test_presets_are_valid() -> None:
    """Test every preset builds a configuration."""
    for name, preset in PRESETS.items():
        config = ExperimentConfig.from_dict(merge(ExperimentConfig().to_dict(), preset))
        assert math.isfinite(config.level_a()), name


def test_config_precedence(output: Output, tmp_path: Path) -> None:
    """Test defaults, preset, file and flags are layered in that order.

    Args:
        output: Output fixture.
        tmp_path: Pytest fixture.
    """
    config_file = tmp_path / "experiment.yml"
    config_file.write_text(
        yaml.safe_dump({"run": {"k": 500, "seed": 9}, "output": {"out": str(tmp_path / "out")}}),
        encoding="utf-8",
    )
    args = Namespace(preset="exponential-moderate", config=str(config_file), seed=4, a=0.05)
    config = Config(args=args, output=output, term_features=TermFeatures(color=False, ansi=False))
    config.init()
    experiment = config.experiment
    assert experiment.model.name == "centered_exponential"
    assert experiment.run.n == 1000
    assert experiment.run.k == 500
    assert experiment.run.seed == 4
    assert experiment.run.a == 0.05
    assert experiment.run.pvalue is None
    assert config.spec.k == 500
    assert config.out_dir.is_dir()


def test_config_unknown_preset(output: Output) -> None:
    """Test an unknown preset name.

    Args:
        output: Output fixture.
    """
    config = Config(
        args=Namespace(preset="nope"),
        output=output,
        term_features=TermFeatures(color=False, ansi=False),
    )
    with pytest.raises(ConfigError, match="Unknown preset"):
        config.init()
