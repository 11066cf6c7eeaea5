"""Agent-based simulator of a mutual-assistance community with participant matching."""

from .config import load_config, write_config
from .engine import run
from .harness import SweepSpec, run_single, run_sweep
from .model import SimParams, ValidationError

__all__ = [
    "SimParams",
    "SweepSpec",
    "ValidationError",
    "load_config",
    "run",
    "run_single",
    "run_sweep",
    "write_config",
]
