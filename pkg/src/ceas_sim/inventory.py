"""Per-link pools of perishable Bell pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import DomainError

LifetimeMode = Literal["uniform", "exponential"]


@dataclass
class BellPair:
    """One entangled pair, usable while ``created_at + coherence_time > now``."""

    created_at: float
    coherence_time: float
    consumed: bool = False

    @property
    def expires_at(self) -> float:
        return self.created_at + self.coherence_time

    def usable(self, now: float) -> bool:
        return not self.consumed and self.expires_at > now

    def remaining(self, now: float) -> float:
        return max(0.0, self.expires_at - now)


@dataclass
class LinkInventory:
    """Bell pairs pooled on one network edge, with running totals."""

    endpoints: tuple[int, int]
    pairs: list[BellPair] = field(default_factory=list)
    decay_rate: float = 0.0
    generated_total: int = 0
    consumed_total: int = 0
    expired_total: int = 0

    def __post_init__(self):
        if self.decay_rate < 0:
            raise DomainError("decay_rate must be >= 0")

    def usable_count(self, now: float) -> int:
        return sum(1 for p in self.pairs if p.usable(now))

    def conserved(self, now: float) -> bool:
        """Check generated = consumed + expired + usable."""
        return self.generated_total == self.consumed_total + self.expired_total + self.usable_count(now)


PairSelector = Callable[[list[BellPair], float], int]


def earliest_expiring(pairs: list[BellPair], now: float) -> int:
    """Index of the usable pair closest to expiry (first one on ties)."""
    best, best_exp = -1, math.inf
    for i, p in enumerate(pairs):
        if p.usable(now) and p.expires_at < best_exp:
            best, best_exp = i, p.expires_at
    return best


def random_selector(rng: np.random.Generator) -> PairSelector:
    """Selector that picks a uniformly random usable pair."""

    def select(pairs: list[BellPair], now: float) -> int:
        idx = [i for i, p in enumerate(pairs) if p.usable(now)]
        return int(idx[rng.integers(len(idx))]) if idx else -1

    return select


def survival_probability(decay_rate: float, dt: float) -> float:
    """Probability that a pair with exponential lifetime survives ``dt`` rounds."""
    if decay_rate < 0 or dt < 0:
        raise DomainError("decay_rate and dt must be >= 0")
    return math.exp(-decay_rate * dt)


def draw_lifetimes(
    n: int,
    rng: np.random.Generator,
    mode: LifetimeMode = "uniform",
    tau_c_range: tuple[float, float] = (3.0, 6.0),
    decay_rate: float = 0.0,
) -> np.ndarray:
    """Coherence times for ``n`` fresh pairs."""
    if mode == "uniform":
        lo, hi = tau_c_range
        return rng.uniform(lo, hi, size=n) if hi > lo else np.full(n, float(lo))
    if mode == "exponential":
        if decay_rate <= 0:
            return np.full(n, math.inf)
        return rng.exponential(1.0 / decay_rate, size=n)
    raise DomainError(f"unknown lifetime mode {mode!r}")


def generate_pairs(
    link: LinkInventory,
    attempts: int,
    p_gen: float,
    tau_c_range: tuple[float, float],
    now: float,
    rng: np.random.Generator,
    mode: LifetimeMode = "uniform",
) -> int:
    """Run ``attempts`` Bernoulli(p_gen) generation attempts on ``link``.

    Returns the number of new pairs.
    """
    if not 0.0 <= p_gen <= 1.0:
        raise DomainError("p_gen must lie in [0, 1]")
    if tau_c_range[0] > tau_c_range[1] or tau_c_range[0] <= 0:
        raise DomainError("tau_c_range must satisfy 0 < min <= max")
    if attempts <= 0:
        return 0
    successes = int(rng.binomial(attempts, p_gen))
    for tau in draw_lifetimes(successes, rng, mode, tau_c_range, link.decay_rate):
        link.pairs.append(BellPair(float(now), float(tau)))
    link.generated_total += successes
    return successes


def age_and_expire(link: LinkInventory, now: float) -> int:
    """Drop pairs whose lifetime has run out; return how many expired."""
    keep = [p for p in link.pairs if p.consumed or p.expires_at > now]
    expired = len(link.pairs) - len(keep)
    link.pairs = [p for p in keep if not p.consumed]
    link.expired_total += expired
    return expired


def consume(link: LinkInventory, now: float, selector: PairSelector = earliest_expiring) -> BellPair | None:
    """Remove one usable pair chosen by ``selector``; ``None`` if there is none."""
    i = selector(link.pairs, now)
    if i < 0:
        return None
    pair = link.pairs.pop(i)
    pair.consumed = True
    link.consumed_total += 1
    return pair


def expected_inventory_step(m: float, decay_rate: float, r: float, c: float) -> float:
    """Mean-field inventory update ``exp(-decay) * m + r - c``.

    The result may be negative; policies clamp it.
    """
    return math.exp(-decay_rate) * m + r - c
