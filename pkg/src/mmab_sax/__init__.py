"""Decentralized multi-player bandits with shareable arms of unknown capacity."""

from .env import (ArmSpec, ConfigError, InstanceConfig, load_instance, make_instance,
                  optimal_allocation, sample_feedback, step_regret)
from .harness import RunConfig, RunResult, run_episode, sweep

__all__ = [
    "ArmSpec", "ConfigError", "InstanceConfig", "load_instance", "make_instance",
    "optimal_allocation", "sample_feedback", "step_regret", "RunConfig", "RunResult",
    "run_episode", "sweep",
]
__version__ = "0.1.0"
