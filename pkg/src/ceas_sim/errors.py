"""Exception types shared across the simulator."""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimulationError, ValueError):
    """Invalid configuration value or specification.

    Attributes:
        key: Name of the offending configuration key, if known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ShapeError(SimulationError, ValueError):
    """Array dimensions do not match."""


class DomainError(SimulationError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConnectivityError(SimulationError):
    """The active communication subgraph is disconnected."""


class ConsensusStall(SimulationError):
    """No node is eligible to contribute to consensus.

    Attributes:
        round: Round at which the stall occurred, if known.
    """

    def __init__(self, message: str, round: int | None = None):
        super().__init__(message)
        self.round = round
