"""Basic smoke tests."""

from __future__ import annotations

import csv

from typing import TYPE_CHECKING

import pytest
import yaml

from conditioned_walk.cli import EXIT_CAP_REACHED, main


if TYPE_CHECKING:
    from pathlib import Path


def _run(monkeypatch: pytest.MonkeyPatch, *args: str) -> int:
    """Run the command line tool.

    Args:
        monkeypatch: Pytest monkeypatch
        *args: The arguments after the program name

    Returns:
        The exit code
    """
    monkeypatch.setattr("sys.argv", ["cwalk", *args, "--no-ansi"])
    with pytest.raises(SystemExit) as excinfo:
        main()
    return int(excinfo.value.code or 0)


def test_sample(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Sample twice with one seed, then again from the manifest.

    Args:
        capsys: Capture stdout and stderr
        tmp_path: Temporary directory
        monkeypatch: Pytest monkeypatch
    """
    run = ["--model", "centered_exponential", "--n", "60", "--k", "40", "--a", "0.2", "--seed", "5"]
    first = tmp_path / "first"
    assert _run(monkeypatch, "sample", *run, "--paths", "4", "--plot", "--out", str(first)) == 0
    for name in ("paths.csv", "paths.cwtrace", "oracle.csv", "paths.svg", "manifest.yml"):
        assert (first / name).exists(), name
    captured = capsys.readouterr()
    assert "E[Y_1 Y_2]" in captured.out

    second = tmp_path / "second"
    assert _run(monkeypatch, "sample", *run, "--paths", "4", "--out", str(second)) == 0
    assert (first / "paths.csv").read_bytes() == (second / "paths.csv").read_bytes()
    assert (first / "paths.cwtrace").read_bytes() == (second / "paths.cwtrace").read_bytes()

    replay = tmp_path / "replay"
    manifest = first / "manifest.yml"
    assert _run(monkeypatch, "sample", "--config", str(manifest), "--out", str(replay)) == 0
    assert (first / "paths.csv").read_bytes() == (replay / "paths.csv").read_bytes()

    content = yaml.safe_load(manifest.read_text(encoding="utf-8"))
    assert content["command"] == "sample"
    assert content["config"]["run"]["seed"] == 5
    assert content["results"]["paths"] == 4


def test_hist(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Histogram pooled increments against the tilted density.

    Args:
        tmp_path: Temporary directory
        monkeypatch: Pytest monkeypatch
    """
    args = ["hist", "--model", "centered_exponential", "--n", "60", "--k", "30", "--a", "0.2"]
    assert _run(monkeypatch, *args, "--paths", "30", "--bins", "20", "--out", str(tmp_path)) == 0
    with (tmp_path / "histogram.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 21
    assert sum(int(row[2]) for row in rows[1:]) == 900
    results = yaml.safe_load((tmp_path / "manifest.yml").read_text(encoding="utf-8"))["results"]
    assert results["count"] == 900
    assert results["ks_statistic"] < 0.1


def test_accuracy(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Estimate a short accuracy curve with its exact counterpart.

    Args:
        tmp_path: Temporary directory
        monkeypatch: Pytest monkeypatch
    """
    args = ["accuracy", "--model", "centered_exponential", "--n", "40", "--k", "30", "--a", "0.2"]
    args += ["--L", "100", "--k-values", "5", "10", "--plot", "--out", str(tmp_path)]
    assert _run(monkeypatch, *args) == 0
    with (tmp_path / "accuracy.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0][:3] == ["k", "ere_bar", "vre_bar"]
    assert [row[0] for row in rows[1:]] == ["5", "10"]
    assert (tmp_path / "accuracy_exact.csv").exists()
    assert (tmp_path / "accuracy.svg").exists()


def test_select_k(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Select a run length for an error budget.

    Args:
        capsys: Capture stdout and stderr
        tmp_path: Temporary directory
        monkeypatch: Pytest monkeypatch
    """
    args = ["select-k", "--model", "centered_exponential", "--n", "40", "--k", "30", "--a", "0.2"]
    args += ["--L", "100", "--delta", "0.1", "--stride", "5", "--out", str(tmp_path)]
    code = _run(monkeypatch, *args)
    assert code in (0, EXIT_CAP_REACHED)
    results = yaml.safe_load((tmp_path / "manifest.yml").read_text(encoding="utf-8"))["results"]
    assert results["cap_reached"] is (code == EXIT_CAP_REACHED)
    if code == 0:
        assert f"k_delta={results['k_delta']}" in capsys.readouterr().out
    else:
        assert results["k_delta"] == 38
    assert (tmp_path / "select_k.csv").exists()


def test_validate(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Run the self checks.

    Args:
        capsys: Capture stdout and stderr
        tmp_path: Temporary directory
        monkeypatch: Pytest monkeypatch
    """
    assert _run(monkeypatch, "validate", "--out", str(tmp_path)) == 0
    captured = capsys.readouterr()
    assert "FAIL" not in captured.out
    assert captured.out.count("PASS") == 5


@pytest.mark.slow
def test_normal_curve_is_flat(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """The normal walk carries no error at any run length under h blocks.

    Args:
        tmp_path: Temporary directory
        monkeypatch: Pytest monkeypatch
    """
    args = ["accuracy", "--n", "200", "--k", "190", "--pvalue", "0.01", "--block-source", "h"]
    assert _run(monkeypatch, *args, "--L", "1000", "--stride", "19", "--out", str(tmp_path)) == 0
    with (tmp_path / "accuracy.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert rows[-1]["k"] == "190"
    for row in rows:
        assert abs(float(row["ere_bar"])) < 1e-8
        assert float(row["ci_hi"]) - float(row["ci_lo"]) < 1e-6
