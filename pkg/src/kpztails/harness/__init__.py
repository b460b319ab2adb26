"""Experiment registry, reproducible runs, and the command-line driver."""

from .registry import EXPERIMENTS, Experiment, Row, list_experiments, passes
from .runner import ExperimentResult, RunManifest, run
from .suites import SUITES, run_suite

__all__ = [
    "EXPERIMENTS",
    "Experiment",
    "ExperimentResult",
    "Row",
    "RunManifest",
    "SUITES",
    "list_experiments",
    "passes",
    "run",
    "run_suite",
]
