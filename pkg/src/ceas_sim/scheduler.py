"""Bell-pair generation planning, consumption grants and the scheduling reward."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .inventory import LinkInventory

POLICIES = ("eef", "random", "static")


@dataclass(frozen=True)
class SchedulerState:
    """Snapshot the planner sees at the start of a round.

    Attributes:
        usable: Usable pairs per link.
        decay_rates: Per-link decay rates (informational for the shipped policies).
        demand: Requested exchanges per link this round.
        round: Round index.
    """

    usable: np.ndarray
    decay_rates: np.ndarray
    demand: np.ndarray
    round: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.usable) < 0) or np.any(np.asarray(self.demand) < 0):
            raise ValueError("usable counts and demand must be nonnegative")


@dataclass(frozen=True)
class SchedulerAction:
    """Generation attempts and consumption grants per link."""

    attempts: np.ndarray
    grants: np.ndarray


@dataclass(frozen=True)
class RewardSpec:
    """Weights of the progress, latency and cost terms of the reward."""

    weight_progress: float = 1.0
    weight_latency: float = 0.5
    weight_cost: float = 0.01
    discount: float = 0.95

    def __post_init__(self):
        if min(self.weight_progress, self.weight_latency, self.weight_cost) < 0:
            raise ConfigError("reward weights must be >= 0")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)", key="discount")


def _eef_attempts(usable: np.ndarray, demand: np.ndarray, budget: int, p_gen: float) -> np.ndarray:
    # One attempt at a time to the link with the lowest projected starvation
    # ratio; links nobody asked for are skipped.
    attempts = np.zeros(len(usable), dtype=np.int64)
    denom = np.maximum(demand, 1).astype(float)
    heap = [(usable[i] / denom[i], i) for i in range(len(usable)) if demand[i] > 0]
    heapq.heapify(heap)
    for _ in range(budget if heap else 0):
        _, i = heapq.heappop(heap)
        attempts[i] += 1
        heapq.heappush(heap, ((usable[i] + p_gen * attempts[i]) / denom[i], i))
    return attempts


def plan_round(
    state: SchedulerState,
    budget: int,
    policy: str,
    rng: np.random.Generator | None = None,
    p_gen: float = 1.0,
) -> SchedulerAction:
    """Split the generation budget across links.

    Args:
        state: Current inventory and demand.
        budget: Maximum total generation attempts.
        policy: ``eef`` (most-starved demanded link first, ties to the
            lowest id),
            ``random`` (uniform multinomial split) or ``static`` (equal split,
            remainder to the lowest ids).
        rng: Required for the random policy.
        p_gen: Expected yield per attempt, used by ``eef`` to project supply.

    Returns:
        Attempts per link and consumption grants ``min(demand, usable)``.
    """
    if policy not in POLICIES:
        raise ConfigError(f"unknown scheduler policy {policy!r}", key="scheduler_policy")
    if budget < 0:
        raise ConfigError("budget must be >= 0", key="bell_budget")
    usable = np.asarray(state.usable, dtype=np.int64)
    demand = np.asarray(state.demand, dtype=np.int64)
    n = len(usable)
    if budget == 0 or n == 0:
        attempts = np.zeros(n, dtype=np.int64)
    elif policy == "eef":
        attempts = _eef_attempts(usable, demand, budget, p_gen)
    elif policy == "random":
        if rng is None:
            raise ConfigError("random policy needs an rng")
        attempts = rng.multinomial(budget, np.full(n, 1.0 / n)).astype(np.int64)
    else:
        attempts = np.full(n, budget // n, dtype=np.int64)
        attempts[: budget % n] += 1
    return SchedulerAction(attempts=attempts, grants=np.minimum(demand, usable))


def unmet_fraction(demand: np.ndarray, served: np.ndarray) -> float:
    """Share of requested exchanges that could not be served."""
    total = float(np.sum(demand))
    if total <= 0:
        return 0.0
    return float(np.sum(np.maximum(np.asarray(demand) - np.asarray(served), 0))) / total


def reward(
    prev: SchedulerState,
    action: SchedulerAction,
    accuracy_delta: float,
    pairs_expired: int,
    spec: RewardSpec,
    served: np.ndarray | None = None,
) -> float:
    """Scalar reward trading accuracy progress against latency and cost.

    Unmet demand is measured against ``served`` exchanges when given, else
    against the grants of ``action``.
    """
    got = action.grants if served is None else served
    unmet = unmet_fraction(prev.demand, got)
    attempts = int(np.sum(action.attempts))
    return (
        spec.weight_progress * accuracy_delta
        - spec.weight_latency * unmet
        - spec.weight_cost * (pairs_expired + attempts)
    )


def utilisation(links: Iterable[LinkInventory]) -> float | None:
    """Consumed over generated across ``links``; ``None`` if nothing was generated."""
    consumed = generated = 0
    for link in links:
        consumed += link.consumed_total
        generated += link.generated_total
    if generated == 0:
        return None
    return consumed / generated
