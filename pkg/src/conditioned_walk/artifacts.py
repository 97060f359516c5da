"""Files written next to a run: CSV data, binary traces, manifests and figures.

Every file is a pure function of its inputs, so a repeated run with the same
configuration and seed writes identical bytes.

Binary trace layout, little endian::

    magic    8 bytes   b"CWTRACE\\0"
    version  uint16    1
    n        uint32    walk length
    k        uint32    run length
    count    uint32    number of runs
    a        float64   level of the mean
    seed     uint64    root seed
    values   float64   count * k increments, row major
"""

from __future__ import annotations

import csv
import logging
import struct

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
import yaml

from .accuracy import report_rows
from .exceptions import ConfigError


if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from .accuracy import AccuracyReport
    from .oracles import OracleSummary
    from .sampler import PathSample


logger = logging.getLogger(__name__)

TRACE_MAGIC = b"CWTRACE\0"
TRACE_VERSION = 1
TRACE_HEADER = struct.Struct("<8sHIIIdQ")

ACCURACY_COLUMNS = ("k", "ere_bar", "vre_bar", "ci_lo", "ci_hi", "L", "drop_rate")
HISTOGRAM_COLUMNS = ("bin_lo", "bin_hi", "count", "density", "reference")
ORACLE_COLUMNS = ("index", "log_density_exact", "log_density_approx", "rel_error")

SVG_SALT = "conditioned-walk"


def _cell(value: Any) -> str:  # noqa: ANN401
    if isinstance(value, bool | np.bool_):
        return str(int(value))
    if isinstance(value, int | np.integer):
        return str(int(value))
    return format(float(value), ".17g")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(value) for value in row] for row in rows)
    logger.debug("Wrote %s", path)
    return path


def write_paths_csv(path: Path, paths: Sequence[PathSample]) -> Path:
    """Write one row per run: index, y_1 ... y_k, log_density.

    Args:
        path: The destination file
        paths: The runs, all of the same length

    Returns:
        The destination file
    """
    k = paths[0].k if paths else 0
    header = ["index", *(f"y_{i}" for i in range(1, k + 1)), "log_density"]
    rows = ([index, *sample.values, sample.log_density] for index, sample in enumerate(paths))
    return _write_rows(path, header, rows)


def write_accuracy_csv(path: Path, reports: Sequence[AccuracyReport]) -> Path:
    """Write an accuracy curve.

    Args:
        path: The destination file
        reports: The curve

    Returns:
        The destination file
    """
    return _write_rows(path, ACCURACY_COLUMNS, report_rows(reports))


def write_oracle_csv(path: Path, summary: OracleSummary) -> Path:
    """Write the product density of each run against the exact density.

    Args:
        path: The destination file
        summary: The comparison

    Returns:
        The destination file
    """
    rows = (
        [index, item.log_density_exact, item.log_density_approx, item.rel_error]
        for index, item in enumerate(summary.evals)
    )
    return _write_rows(path, ORACLE_COLUMNS, rows)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Pooled increments binned against a reference density.

    Attributes:
        edges: Bin edges
        counts: Counts per bin
        density: Normalized heights per bin
        reference: Reference density at the bin centers
    """

    edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    density: NDArray[np.float64]
    reference: NDArray[np.float64]

    @property
    def centers(self) -> NDArray[np.float64]:
        """Midpoints of the bins."""
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def histogram(
    values: ArrayLike,
    bins: int,
    reference: Callable[[NDArray[np.float64]], NDArray[np.float64]],
) -> Histogram:
    """Bin pooled increments.

    Args:
        values: The pooled increments
        bins: Number of bins
        reference: The reference density

    Returns:
        The histogram

    Raises:
        ConfigError: Without values or with fewer than one bin
    """
    data = np.asarray(values, dtype=np.float64).ravel()
    if data.size == 0 or bins < 1:
        msg = (
            "A histogram needs values and at least one bin, "
            f"got {data.size} values and {bins} bins."
        )
        raise ConfigError(msg)
    counts, edges = np.histogram(data, bins=bins)
    widths = np.diff(edges)
    density = counts / (data.size * widths)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return Histogram(
        edges=edges,
        counts=counts.astype(np.int64),
        density=density,
        reference=np.asarray(reference(centers), dtype=np.float64),
    )


def write_histogram_csv(path: Path, hist: Histogram) -> Path:
    """Write a histogram with its reference curve.

    Args:
        path: The destination file
        hist: The histogram

    Returns:
        The destination file
    """
    rows = zip(
        hist.edges[:-1],
        hist.edges[1:],
        hist.counts,
        hist.density,
        hist.reference,
        strict=True,
    )
    return _write_rows(path, HISTOGRAM_COLUMNS, rows)


def write_trace(path: Path, paths: Sequence[PathSample], *, n: int, a: float, seed: int) -> Path:
    """Write runs in the compact binary trace layout.

    Args:
        path: The destination file
        paths: The runs, all of the same length
        n: The walk length
        a: The level of the mean
        seed: The root seed

    Returns:
        The destination file
    """
    k = paths[0].k if paths else 0
    values = np.vstack([sample.values for sample in paths]) if paths else np.empty((0, 0))
    header = TRACE_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, n, k, len(paths), a, seed)
    path.write_bytes(header + values.astype("<f8").tobytes(order="C"))
    logger.debug("Wrote %s", path)
    return path


@dataclass(frozen=True, eq=False)
class Trace:
    """Contents of a binary trace.

    Attributes:
        n: The walk length
        k: The run length
        a: The level of the mean
        seed: The root seed
        values: Runs, shape (count, k)
    """

    n: int
    k: int
    a: float
    seed: int
    values: NDArray[np.float64]


def read_trace(path: Path) -> Trace:
    """Read a binary trace.

    Args:
        path: The trace file

    Returns:
        The trace

    Raises:
        ConfigError: If the file is not a trace or is truncated
    """
    data = path.read_bytes()
    if len(data) < TRACE_HEADER.size:
        msg = f"{path} is too short for a trace header."
        raise ConfigError(msg)
    magic, version, n, k, count, a, seed = TRACE_HEADER.unpack_from(data)
    if magic != TRACE_MAGIC or version != TRACE_VERSION:
        msg = f"{path} is not a version {TRACE_VERSION} trace."
        raise ConfigError(msg)
    body = data[TRACE_HEADER.size :]
    if len(body) != 8 * count * k:
        msg = f"{path} holds {len(body)} bytes of values, expected {8 * count * k}."
        raise ConfigError(msg)
    values = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(count, k)
    return Trace(n=n, k=k, a=a, seed=seed, values=values)


def write_manifest(path: Path, manifest: dict[str, Any]) -> Path:
    """Write the run manifest.

    Args:
        path: The destination file
        manifest: Command, version, configuration and results

    Returns:
        The destination file
    """
    text = yaml.safe_dump(manifest, sort_keys=False, default_flow_style=False)
    path.write_text(text, encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def _pyplot() -> Any:  # noqa: ANN401
    import matplotlib  # pylint: disable=import-outside-toplevel

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = SVG_SALT
    import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel

    return plt


def _save(fig: Any, path: Path) -> Path:  # noqa: ANN401
    plt = _pyplot()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("Wrote %s", path)
    return path


def plot_paths(path: Path, paths: Sequence[PathSample], level: float) -> Path:
    """Draw the running means of a bundle of runs.

    Args:
        path: The destination SVG file
        paths: The runs
        level: The conditioning level on the f scale

    Returns:
        The destination file
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    for sample in paths:
        steps = np.arange(1, sample.k + 1)
        ax.plot(steps, sample.values, linewidth=0.6, alpha=0.7)
    ax.axhline(level, color="black", linestyle="--", linewidth=1.0, label="level")
    ax.set_xlabel("i")
    ax.set_ylabel("y_i")
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_histogram(path: Path, hist: Histogram) -> Path:
    """Draw a histogram with its reference density.

    Args:
        path: The destination SVG file
        hist: The histogram

    Returns:
        The destination file
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.stairs(hist.density, hist.edges, fill=True, alpha=0.5, label="sampled")
    ax.plot(hist.centers, hist.reference, color="red", linewidth=1.5, label="tilted density")
    ax.set_xlabel("y")
    ax.set_ylabel("density")
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_accuracy(
    path: Path,
    reports: Sequence[AccuracyReport],
    oracle: Sequence[AccuracyReport] | None = None,
    delta: float | None = None,
) -> Path:
    """Draw the error interval and the variance of a curve in two panels.

    Args:
        path: The destination SVG file
        reports: The proxy curve
        oracle: The exact curve, when available
        delta: The error budget to mark

    Returns:
        The destination file
    """
    plt = _pyplot()
    fig, (upper, lower) = plt.subplots(2, 1, figsize=(8, 8), sharex=True)
    curves = [("proxy", reports, "tab:blue")]
    if oracle:
        curves.append(("exact", oracle, "tab:orange"))
    for label, curve, color in curves:
        ks = [report.k for report in curve]
        upper.plot(ks, [report.ere_bar for report in curve], color=color, label=f"ERE {label}")
        upper.fill_between(
            ks,
            [report.ci_lo for report in curve],
            [report.ci_hi for report in curve],
            color=color,
            alpha=0.2,
        )
        lower.plot(ks, [report.vre_bar for report in curve], color=color, label=f"VRE {label}")
    if delta is not None:
        upper.axhline(delta, color="black", linestyle=":", linewidth=1.0, label="delta")
    upper.set_ylabel("relative error")
    lower.set_ylabel("variance")
    lower.set_xlabel("k")
    upper.legend(loc="upper left")
    lower.legend(loc="upper left")
    return _save(fig, path)


def _plain(value: Any) -> Any:  # noqa: ANN401
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(item) for item in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def run_manifest(
    command: str,
    version: str,
    config: dict[str, Any],
    resolved: dict[str, Any],
    results: dict[str, Any],
) -> dict[str, Any]:
    """Assemble a run manifest.

    The configuration section is complete, so loading the manifest with
    ``--config`` reproduces the run.

    Args:
        command: The subcommand
        version: The package version
        config: The merged configuration
        resolved: Values derived from the configuration
        results: Command results

    Returns:
        Plain data ready for YAML
    """
    return _plain(
        {
            "command": command,
            "version": version,
            "config": config,
            "resolved": resolved,
            "results": results,
        },
    )
