"""The subcommands of the cwalk command line tool."""

# ruff: noqa: F401
from __future__ import annotations

from .estimator import Estimator as Accuracy
from .histogrammer import Histogrammer as Hist
from .sampler import Sampler as Sample
from .selector import Selector as SelectK
from .validator import Validator as Validate
