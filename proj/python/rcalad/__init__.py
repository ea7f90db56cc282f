"""Anomaly detection with cycle-consistent adversarial networks (C++ core)."""

import json

from ._core import (
    Config,
    Model,
    RcaladError,
    Report,
    auroc,
    evaluate,
    flag_count,
    prepare,
    threshold_flags,
    toy,
    wilcoxon,
)
from ._core import run_experiment as _run_experiment


def run(config, threads=0):
    """Run the configured protocol; returns (report, metrics dict)."""
    report = _run_experiment(config, threads)
    return report, json.loads(report.metrics_json())


__all__ = [
    "Config",
    "Model",
    "RcaladError",
    "Report",
    "auroc",
    "evaluate",
    "flag_count",
    "prepare",
    "run",
    "threshold_flags",
    "toy",
    "wilcoxon",
]
