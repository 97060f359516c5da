"""Global conftest.py for pytest.

The root package import below happens before the pytest workers are forked, so it
picked up by the initial coverage process for a source match.

Without it, coverage reports the following false positive error:

CoverageWarning: No data was collected. (no-data-collected)

This works in conjunction with the coverage source_pkg set to the package such that
a `coverage run --debug trace` shows the source package and file match.

<...>
Imported source package 'conditioned_walk' as '/**/src/<package>/__init__.py'
<...>
Tracing '/**/src/<package>/__init__.py'
"""

from __future__ import annotations

import logging

from typing import TYPE_CHECKING

import pytest

import conditioned_walk  # noqa: F401

from conditioned_walk.models import CenteredExponentialModel, NormalModel, NormalSquareModel
from conditioned_walk.output import LibraryHandler
from conditioned_walk.run_density import RunSpec


if TYPE_CHECKING:
    from collections.abc import Generator


@pytest.fixture
def normal_spec() -> RunSpec:
    """Return a short normal run.

    Returns:
        The run description
    """
    return RunSpec(n=40, k=30, a=0.3, model=NormalModel(), seed=7)


@pytest.fixture
def exponential_spec() -> RunSpec:
    """Return a short centered exponential run.

    Returns:
        The run description
    """
    return RunSpec(n=60, k=20, a=0.2, model=CenteredExponentialModel(), seed=11)


@pytest.fixture
def square_spec() -> RunSpec:
    """Return a short run conditioned on the mean of squares.

    Returns:
        The run description
    """
    return RunSpec(n=60, k=20, a=0.3, model=NormalSquareModel(), seed=3)


@pytest.fixture(autouse=True)
def _clean_package_logger() -> Generator[None, None, None]:
    """Drop handlers the command line attaches to the package logger.

    Yields:
        Nothing
    """
    yield
    logger = logging.getLogger("conditioned_walk")
    for handler in list(logger.handlers):
        if isinstance(handler, LibraryHandler | logging.FileHandler):
            logger.removeHandler(handler)
            handler.close()
