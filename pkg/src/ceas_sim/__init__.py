"""Simulator of fidelity-weighted, entanglement-aware Byzantine-resilient gossip training."""

from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .engine import RunTrace, Simulation, decay_fidelity, run_experiment

__all__ = [
    "ExperimentConfig",
    "RunTrace",
    "Simulation",
    "decay_fidelity",
    "load_config",
    "parse_config",
    "run_experiment",
    "serialize_config",
]
