"""Parameterized stochastic particle flow filters for linear-Gaussian models."""

import json

from ._flowfilt import *  # noqa: F401,F403
from ._flowfilt import __version__, run_experiment as _run_experiment


def run(config, base_dir=""):
    """Run an experiment config (a dict) in memory and return (summary, files)."""
    summary, files = _run_experiment(json.dumps(config), str(base_dir))
    return json.loads(summary), files
