"""Experiment harness: configs, reports, convergence studies, runners and the CLI."""
from .cli import build_parser, main  # noqa: F401
from .config import DEFAULT_TOLERANCES, SUBCOMMANDS, ExperimentConfig, default_config  # noqa: F401
from .experiments import run  # noqa: F401
from .report import VerificationReport  # noqa: F401
from .selftest import run_selftest  # noqa: F401
from .study import run_convergence_study  # noqa: F401
