"""Oracle checks run by ``ceas-sim validate``.

Each check compares a simulator kernel with an independent computation
(grid search, Monte Carlo or eigen-decomposition) and returns a
:class:`CheckResult`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import networkx as nx
import numpy as np

from .adversary import kl_divergence, trust_ema
from .consensus import build_mixing_matrix, gossip_round, optimal_inverse_variance_weights
from .engine import decay_fidelity
from .inventory import LinkInventory, age_and_expire, consume, expected_inventory_step, generate_pairs

GRID_STEP = 0.01


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@lru_cache(maxsize=None)
def simplex_grid(k: int, step: float = GRID_STEP) -> np.ndarray:
    """All weight vectors of length ``k`` on the simplex with the given spacing."""
    m = int(round(1 / step))
    if k == 1:
        return np.ones((1, 1))
    axes = np.meshgrid(*([np.arange(m + 1)] * (k - 1)), indexing="ij")
    head = np.stack([a.ravel() for a in axes], axis=1)
    head = head[head.sum(axis=1) <= m]
    return np.hstack([head, m - head.sum(axis=1, keepdims=True)]) / m


def check_inverse_variance(
    weights_fn: Callable[[np.ndarray], np.ndarray] = optimal_inverse_variance_weights,
    n_vectors: int = 100,
    seed: int = 0,
) -> CheckResult:
    """Grid search never beats the inverse-trace weighting by more than grid slack.

    The slack is the largest variance increase caused by rounding the optimum
    to the grid: ``sum_k (step)^2 * trace_k``.
    """
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_vectors):
        k = int(rng.integers(1, 5))
        traces = rng.uniform(0.1, 10.0, size=k)
        w = np.asarray(weights_fn(traces), dtype=float)
        v_formula = float(np.sum(w * w * traces))
        v_grid = float(np.min(simplex_grid(k) ** 2 @ traces))
        slack = GRID_STEP**2 * float(traces.sum())
        worst = max(worst, (v_formula - v_grid) - slack)
        if v_grid < v_formula - slack:
            return CheckResult("inverse-variance weights", False,
                               f"grid found variance {v_grid:.6g} below formula {v_formula:.6g} for traces {traces}")
    return CheckResult("inverse-variance weights", True, f"{n_vectors} trace vectors, worst margin {worst:.3g}")


INVENTORY_STEP_SETTINGS = (
    # (initial pairs, decay rate, attempts, p_gen, consumed)
    (10, 0.2, 5, 1.0, 3),
    (20, 0.1, 8, 1.0, 6),
    (5, 0.5, 10, 1.0, 8),
    (30, 0.05, 0, 1.0, 4),
    (15, 0.3, 12, 1.0, 12),
)


def inventory_trial_mean(m: int, rate: float, attempts: int, p_gen: float, c: int, trials: int, rng) -> float:
    """Mean usable inventory after one round, simulated pair by pair."""
    total = 0
    for _ in range(trials):
        link = LinkInventory((0, 1), decay_rate=rate)
        generate_pairs(link, m, 1.0, (1.0, 1.0), 0, rng, mode="exponential")
        age_and_expire(link, 1)
        generate_pairs(link, attempts, p_gen, (1.0, 1.0), 1, rng, mode="exponential")
        for _ in range(c):
            consume(link, 1)
        total += link.usable_count(1)
    return total / trials


def check_inventory_step(trials: int = 10_000, seed: int = 1, tol: float = 0.02) -> CheckResult:
    """Monte-Carlo mean inventory matches the expected one-step update."""
    rng = np.random.default_rng(seed)
    errs = []
    for m, rate, attempts, p_gen, c in INVENTORY_STEP_SETTINGS:
        emp = inventory_trial_mean(m, rate, attempts, p_gen, c, trials, rng)
        want = expected_inventory_step(m, rate, attempts * p_gen, c)
        errs.append(abs(emp - want) / abs(want))
    worst = max(errs)
    return CheckResult("expected inventory step", worst <= tol,
                       f"{len(INVENTORY_STEP_SETTINGS)} settings x {trials} trials, worst relative error {worst:.4f}")


def check_survival_law(n_pairs: int = 100_000, rate: float = 0.2, seed: int = 2) -> CheckResult:
    """Fraction of pairs surviving 1, 2, 3 rounds falls inside the 95% binomial interval."""
    rng = np.random.default_rng(seed)
    link = LinkInventory((0, 1), decay_rate=rate)
    generate_pairs(link, n_pairs, 1.0, (1.0, 1.0), 0, rng, mode="exponential")
    parts = []
    ok = True
    for dt in (1, 2, 3):
        age_and_expire(link, dt)
        frac = link.usable_count(dt) / n_pairs
        p = math.exp(-rate * dt)
        half = 1.96 * math.sqrt(p * (1 - p) / n_pairs)
        ok &= abs(frac - p) <= half
        parts.append(f"dt={dt}: {frac:.4f} vs {p:.4f}±{half:.4f}")
    return CheckResult("survival law", ok, "; ".join(parts))


def dense_graphs(n_graphs: int = 60, seed: int = 3) -> list[nx.Graph]:
    """Connected graphs on at most 10 nodes whose minimum degree is at least half the order."""
    rng = np.random.default_rng(seed)
    graphs = [nx.complete_graph(n) for n in range(2, 11)]
    while len(graphs) < n_graphs:
        n = int(rng.integers(3, 11))
        g = nx.gnp_random_graph(n, 0.7, seed=int(rng.integers(2**31)))
        if nx.is_connected(g) and min(d for _, d in g.degree()) >= n / 2:
            graphs.append(g)
    return graphs


def check_gossip(seed: int = 4, steps: int = 50, tol: float = 1e-6) -> CheckResult:
    """Uniform stamps reach the mean in ``steps``; skewed stamps reach the stationary mean."""
    rng = np.random.default_rng(seed)
    worst_u = worst_pi = 0.0
    for g in dense_graphs():
        n = g.number_of_nodes()
        x = rng.normal(size=(n, 3))
        out = gossip_round(x, g, np.ones(n), depth=steps)
        worst_u = max(worst_u, float(np.abs(out - x.mean(axis=0)).max()))
        phi = rng.uniform(0.1, 1.0, size=n)
        phi[0] = 0.9
        w = build_mixing_matrix(g, phi)
        vals, vecs = np.linalg.eig(w.T)
        pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
        pi /= pi.sum()
        out = gossip_round(x, g, phi, depth=20 * steps)
        worst_pi = max(worst_pi, float(np.abs(out - pi @ x).max()))
    ok = worst_u <= tol and worst_pi <= tol
    return CheckResult("gossip convergence", ok, f"uniform max error {worst_u:.2e}, weighted max error {worst_pi:.2e}")


def check_exact_formulas(tol: float = 1e-12) -> CheckResult:
    """Closed forms evaluated through the simulator agree with direct arithmetic."""
    errs = [
        abs(trust_ema(1.0, 0, 0.9) - 0.9),
        abs(trust_ema(0.9, 1, 0.9) - 0.91),
        abs(kl_divergence(np.array([1.0, 0.0]), np.zeros(2), 1.0) - 0.5),
        abs(decay_fidelity(1.0, 4.0) - math.exp(-0.25)),
    ]
    f = 0.93
    for _ in range(40):
        f = decay_fidelity(f, 4.5)
    errs.append(abs(f - 0.93 * math.exp(-40 / 4.5)))
    worst = max(errs)
    return CheckResult("exact formulas", worst <= tol, f"worst deviation {worst:.2e}")


def run_all(weights_fn: Callable[[np.ndarray], np.ndarray] = optimal_inverse_variance_weights) -> list[CheckResult]:
    checks = [
        lambda: check_inverse_variance(weights_fn),
        check_inventory_step,
        check_survival_law,
        check_gossip,
        check_exact_formulas,
    ]
    results = []
    for check in checks:
        t0 = time.perf_counter()
        res = check()
        results.append(CheckResult(res.name, res.passed, res.detail, time.perf_counter() - t0))
    return results
