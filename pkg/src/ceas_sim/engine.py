"""Round-based simulator tying learning, entanglement, consensus and defence together."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from . import adversary as adv
from .config import ExperimentConfig
from .consensus import mixing_from_edges, normalize_weights
from .datagen import DataSpec, batch_accuracy, batch_logistic_gradient, bias_direction, generate_dataset
from .errors import ConfigError, ConsensusStall, DomainError
from .inventory import LinkInventory, age_and_expire, consume, earliest_expiring, generate_pairs, random_selector
from .scheduler import SchedulerState, plan_round

FIDELITY_FLOOR = 1e-6
# Independent random streams, one per concern, so changing one cannot shift another.
STREAMS = ("roles", "topology", "data", "init", "noise", "attack", "scheduler", "pairs", "verify", "baseline")


def decay_fidelity(f: float, tau_c: float) -> float:
    """One round of exponential decoherence, floored at ``1e-6``."""
    if not 0.0 < f <= 1.0:
        raise DomainError(f"fidelity {f} outside (0, 1]")
    if not tau_c > 0:
        raise DomainError("tau_c must be > 0")
    return max(f * math.exp(-1.0 / tau_c), FIDELITY_FLOOR)


def decay_fidelities(f: np.ndarray, tau_c: np.ndarray) -> np.ndarray:
    """Vectorised :func:`decay_fidelity`."""
    return np.maximum(f * np.exp(-1.0 / np.asarray(tau_c, dtype=float)), FIDELITY_FLOOR)


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round summary written to the metrics CSV."""

    round: int
    accuracy: float
    utilisation: float | None
    isolation_rate: float
    active_nodes: int
    mean_fidelity: float
    checkpoint_committed: bool


@dataclass(frozen=True)
class CheckpointRecord:
    """Outcome of one checkpoint round.

    Attributes:
        round: Checkpoint round.
        committed: Whether the quorum was reached.
        global_params: Committed model, ``None`` when nothing was committed.
        signers: Node ids that signed.
        verification: Map node id to verification outcome (empty when unverified).
        weights: Aggregation weight of every node (zeros when not committed).
    """

    round: int
    committed: bool
    global_params: np.ndarray | None
    signers: tuple[int, ...]
    verification: dict[int, int]
    weights: np.ndarray


@dataclass(frozen=True)
class RoundAudit:
    """Facts the safety audit needs about one round."""

    round: int
    quarantined: np.ndarray
    consensus_weights: np.ndarray
    max_quarantined_mixing: float


@dataclass
class RunTrace:
    """Everything one run produced."""

    config: ExperimentConfig
    seed: int
    metrics: list[RoundMetrics] = field(default_factory=list)
    checkpoints: list[CheckpointRecord] = field(default_factory=list)
    audits: list[RoundAudit] = field(default_factory=list)
    byzantine: np.ndarray | None = None
    stalled_at: int | None = None


def build_topology(n: int, degree: int, rng: np.random.Generator, max_tries: int = 1000) -> nx.Graph:
    """Random ``degree``-regular graph, redrawn until connected."""
    for _ in range(max_tries):
        g = nx.random_regular_graph(degree, n, seed=int(rng.integers(2**31 - 1)))
        if nx.is_connected(g):
            return g
    raise ConfigError(f"no connected {degree}-regular graph on {n} nodes found", key="topology_degree")


def assign_roles(n: int, n_honest: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of Byzantine nodes; the first ``n_honest`` of a shuffle are honest."""
    byz = np.zeros(n, dtype=bool)
    byz[rng.permutation(n)[n_honest:]] = True
    return byz


class Simulation:
    """Mutable state of one run; call :meth:`run_round` for rounds 1, 2, ...

    Args:
        config: Experiment configuration.
        seed: Master seed; the run is a pure function of ``(config, seed)``.
    """

    def __init__(self, config: ExperimentConfig, seed: int):
        config.validate()
        self.cfg = config
        self.seed = int(seed)
        self.ceas = config.protocol == "ceas"
        children = np.random.SeedSequence(self.seed).spawn(len(STREAMS))
        self.rng = {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}
        n = config.n_nodes

        self.byz = assign_roles(n, config.n_honest, self.rng["roles"])
        self.graph = build_topology(n, config.topology_degree, self.rng["topology"])
        self.edges = np.array(sorted((min(u, v), max(u, v)) for u, v in self.graph.edges()), dtype=np.int64)

        data_seeds = self.rng["data"].integers(0, 2**63 - 1, size=n + 1)
        designs, labels = [], []
        for k in range(n):
            spec = DataSpec(
                config.samples_per_node,
                config.dim,
                config.delta_c_byz if self.byz[k] else config.delta_c_honest,
                config.label_noise_byz if self.byz[k] else config.label_noise_honest,
                int(data_seeds[k]),
            )
            ds = generate_dataset(spec)
            designs.append(ds.design())
            labels.append(ds.labels)
        self.designs = np.stack(designs)
        self.labels = np.stack(labels).astype(float)
        self.eval_set = generate_dataset(
            DataSpec(config.eval_samples, config.dim, config.eval_delta_c, config.eval_label_noise, int(data_seeds[n]))
        )

        init_rng = self.rng["init"]
        self.bias_dirs = np.stack([bias_direction(config.dim, init_rng) for _ in range(n)])
        self.theta = np.tile(config.init_scale * init_rng.standard_normal(config.dim + 1), (n, 1))
        self.f0 = 1.0 - np.where(self.byz, config.byz_error, config.honest_error)
        self.fidelity = np.maximum(self.f0.copy(), FIDELITY_FLOOR)
        self.coherence = np.where(self.byz, config.coherence_byz, config.coherence_honest)

        self.links = [LinkInventory((int(u), int(v)), decay_rate=config.pair_decay_rate) for u, v in self.edges]
        policy = config.scheduler_policy if self.ceas else config.baseline_scheduler
        self.policy = policy
        self.selector = random_selector(self.rng["pairs"]) if policy == "random" else earliest_expiring

        self.trust = np.ones(n)
        self.quarantine = adv.QuarantineState.create(
            n, config.quarantine_window, config.threshold_base, config.min_active, self.f0,
            config.readmit_ratio, config.probation_rounds,
        )
        self.attack = adv.AttackSpec(config.attack_mode, config.gaussian_scale, config.flip_factor,
                                     config.scale_factor, config.switch_period, config.cycle)
        self.trace = RunTrace(config, self.seed, byzantine=self.byz.copy())
        self.last_readmitted: tuple[int, ...] = ()

    # -- helpers ---------------------------------------------------------
    @property
    def quarantined(self) -> np.ndarray:
        return self.quarantine.quarantined if self.ceas else np.zeros(self.cfg.n_nodes, dtype=bool)

    def reported_stamps(self) -> np.ndarray:
        """Stamps as broadcast: honest nodes report their fidelity, forgers report 1."""
        phi = self.fidelity * math.exp(-self.cfg.process_distance)
        if self.cfg.forge_stamps:
            phi = np.where(self.byz, 1.0, phi)
        return phi

    def _utilisation(self) -> float | None:
        gen = sum(link.generated_total for link in self.links)
        if gen == 0:
            return None
        return sum(link.consumed_total for link in self.links) / gen

    # -- round phases ----------------------------------------------------
    def _entanglement(self, t: int, active: np.ndarray) -> None:
        cfg = self.cfg
        for link in self.links:
            age_and_expire(link, t)
        demand = np.where(active[self.edges[:, 0]] & active[self.edges[:, 1]], cfg.depth, 0)
        usable = np.array([link.usable_count(t) for link in self.links])
        state = SchedulerState(usable, np.full(len(self.links), cfg.pair_decay_rate), demand, t)
        action = plan_round(state, cfg.bell_budget, self.policy, self.rng["scheduler"], cfg.p_gen)
        for link, a in zip(self.links, action.attempts):
            if a:
                generate_pairs(link, int(a), cfg.p_gen, (cfg.tau_c_min, cfg.tau_c_max), t, self.rng["pairs"],
                               cfg.lifetime_mode)

    def _local_step(self, t: int) -> np.ndarray:
        cfg = self.cfg
        grad = batch_logistic_gradient(self.theta, self.designs, self.labels)
        err = np.clip(1.0 - self.fidelity, 0.0, 1.0)
        grad += (cfg.bias_scale * err)[:, None] * self.bias_dirs
        grad += np.sqrt(cfg.variance_scale * err)[:, None] * self.rng["noise"].standard_normal(grad.shape)
        new = self.theta - cfg.learning_rate * grad
        honest_active = ~self.byz & ~self.quarantined
        # Per-coordinate spread of the honest population, seen only by the adversary.
        sigma_w = new[honest_active].std(axis=0) if honest_active.any() else np.zeros(new.shape[1])
        if self.byz.any():
            new[self.byz] = adv.apply_attack(new[self.byz], self.attack, sigma_w, t, self.rng["attack"])
        return new

    def _gossip(self, t: int, x: np.ndarray, phi: np.ndarray, active: np.ndarray) -> tuple[np.ndarray, float]:
        quar = ~active
        cand = np.flatnonzero(active[self.edges[:, 0]] & active[self.edges[:, 1]])
        worst = 0.0
        for _ in range(self.cfg.depth):
            alive = [i for i in cand if consume(self.links[i], t, self.selector) is not None]
            w = mixing_from_edges(self.edges[alive] if alive else self.edges[:0], phi, quar)
            if quar.any():
                cols = np.flatnonzero(quar)
                off = w[:, cols].copy()
                off[cols, np.arange(len(cols))] = 0.0
                worst = max(worst, float(off.max()))
            x = w @ x
        return x, worst

    def _checkpoint(self, t: int, active: np.ndarray, phi: np.ndarray) -> CheckpointRecord:
        cfg = self.cfg
        n = cfg.n_nodes
        if not self.ceas:
            subset = self._baseline_subset
            w = np.zeros(n)
            w[subset] = 1.0 / len(subset)
            g = w @ self.theta
            self.theta[:] = g
            return CheckpointRecord(t, True, g, tuple(int(k) for k in subset), {}, w)
        ids = np.flatnonzero(active)
        outcome = adv.verify_many(self.byz[ids], cfg.tag_detection_prob, self.rng["verify"])
        verification = {int(k): int(v) for k, v in zip(ids, outcome)}
        signers = ids[outcome == 1]
        self.trust[ids] = adv.trust_ema(self.trust[ids], outcome, cfg.trust_alpha)
        if len(signers) < cfg.quorum:
            return CheckpointRecord(t, False, None, tuple(int(k) for k in signers), verification, np.zeros(n))
        excluded = np.ones(n, dtype=bool)
        excluded[signers] = False
        w = normalize_weights(phi, excluded)
        g = w @ self.theta
        self.theta[active] = g
        return CheckpointRecord(t, True, g, tuple(int(k) for k in signers), verification, w)

    def _quarantine(self, t: int, phi: np.ndarray) -> None:
        cfg = self.cfg
        active = ~self.quarantine.quarantined
        ref = np.median(self.theta[active], axis=0)
        honest = active & ~self.byz
        sigma_sq = float(self.theta[honest].var()) if honest.any() else 0.0
        sigma_sq = max(sigma_sq, 1e-12)
        div = adv.kl_divergences(self.theta, ref, sigma_sq)
        self.quarantine, events = adv.quarantine_step(
            self.quarantine, self.fidelity, div, int(active.sum()),
            stamps=phi, trust=self.trust, trust_min=cfg.trust_min, now=t,
        )
        self.last_readmitted = events.readmitted
        back = np.array(events.readmitted, dtype=np.int64)
        if back.size:
            self.trust[back] = 0.5
            if cfg.recover_on_readmit:
                self.fidelity[back] = self.f0[back]

    def run_round(self, t: int) -> RoundMetrics:
        """Execute round ``t`` (1-based) and return its metrics."""
        cfg = self.cfg
        n = cfg.n_nodes
        active = ~self.quarantined
        self._baseline_subset = np.sort(
            self.rng["baseline"].choice(n, size=max(1, int(round(cfg.baseline_fraction * n))), replace=False)
        )
        self._entanglement(t, active)
        self.theta = self._local_step(t)
        self.fidelity = decay_fidelities(self.fidelity, self.coherence)
        phi = self.reported_stamps() if self.ceas else np.ones(n)
        self.theta, worst = self._gossip(t, self.theta, phi, active)

        committed = False
        if t % cfg.checkpoint_period == 0:
            rec = self._checkpoint(t, active, phi)
            self.trace.checkpoints.append(rec)
            committed = rec.committed
        self.last_readmitted = ()
        if self.ceas:
            self._quarantine(t, phi)

        quar = self.quarantined
        if self.ceas:
            try:
                weights = normalize_weights(phi, quar)
            except ConsensusStall as exc:
                raise ConsensusStall(str(exc), round=t) from None
        else:
            weights = np.zeros(n)
            weights[self._baseline_subset] = 1.0 / len(self._baseline_subset)
        scored = np.flatnonzero(weights > 0)
        acc = float(weights[scored] @ batch_accuracy(self.theta[scored], self.eval_set))
        self.trace.audits.append(RoundAudit(t, quar.copy(), weights, worst))
        n_byz = int(self.byz.sum())
        iso = float(self.quarantine.ever[self.byz].sum() / n_byz) if (n_byz and self.ceas) else 0.0
        act = ~quar
        return RoundMetrics(
            round=t,
            accuracy=acc,
            utilisation=self._utilisation(),
            isolation_rate=iso,
            active_nodes=int(act.sum()),
            mean_fidelity=float(self.fidelity[act].mean()),
            checkpoint_committed=committed,
        )


def run_experiment(config: ExperimentConfig, seed: int) -> RunTrace:
    """Run every round of one experiment and return the full trace.

    A consensus stall stops the run early; ``trace.stalled_at`` records the round.
    """
    sim = Simulation(config, seed)
    for t in range(1, config.rounds + 1):
        try:
            sim.trace.metrics.append(sim.run_round(t))
        except ConsensusStall as exc:
            sim.trace.stalled_at = exc.round if exc.round is not None else t
            break
    return sim.trace


def audit_trace(trace: RunTrace) -> list[str]:
    """Every safety violation in ``trace``; an empty list means the run was safe.

    Checks that no signer of a checkpoint failed verification, that committed
    checkpoints reached the quorum and gave zero weight to failed nodes, and
    that quarantined nodes had zero weight in every aggregation and mixing
    step.
    """
    cfg = trace.config
    bad: list[str] = []
    verified = cfg.protocol == "ceas"
    for rec in trace.checkpoints:
        if not verified:
            continue
        for k in rec.signers:
            if rec.verification.get(k) != 1:
                bad.append(f"round {rec.round}: signer {k} did not pass verification")
        if rec.committed:
            if len(rec.signers) < cfg.quorum:
                bad.append(f"round {rec.round}: committed with {len(rec.signers)} < {cfg.quorum} signers")
            for k, v in rec.verification.items():
                if v == 0 and rec.weights[k] > 0:
                    bad.append(f"round {rec.round}: failed node {k} has weight {rec.weights[k]}")
            outsiders = np.ones(len(rec.weights), dtype=bool)
            outsiders[list(rec.signers)] = False
            if np.any(rec.weights[outsiders] != 0):
                bad.append(f"round {rec.round}: non-signer carries aggregation weight")
    for a in trace.audits:
        if np.any(a.consensus_weights[a.quarantined] != 0):
            bad.append(f"round {a.round}: quarantined node with nonzero consensus weight")
        if a.max_quarantined_mixing != 0:
            bad.append(f"round {a.round}: quarantined node mixed into a neighbour ({a.max_quarantined_mixing})")
    return bad
