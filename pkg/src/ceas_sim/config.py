"""Experiment configuration: a flat ``key = value`` text format."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .adversary import ATTACK_MODES, BASE_ATTACKS
from .errors import ConfigError
from .scheduler import POLICIES

PROTOCOLS = ("ceas", "random-baseline")
LIFETIME_MODES = ("uniform", "exponential")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one simulation run.

    ``gossip_depth`` and ``byz_bound`` accept ``None`` (written ``auto``):
    the depth then becomes ``ceil(log2 n_nodes)`` and the bound
    ``floor(n_nodes / 3) - 1``. Coherence times accept ``inf``.
    """

    # Population and schedule.
    n_nodes: int = 50
    rounds: int = 300
    honest_fraction: float = 0.6
    protocol: str = "ceas"
    # Device error rates (initial fidelity is one minus these).
    honest_error: float = 0.01
    byz_error: float = 0.20
    # Data.
    dim: int = 8
    samples_per_node: int = 200
    delta_c_honest: float = 1.4
    delta_c_byz: float = 0.9
    label_noise_honest: float = 0.03
    label_noise_byz: float = 0.25
    eval_samples: int = 20000
    eval_delta_c: float = 1.6
    eval_label_noise: float = 0.03
    # Learning.
    learning_rate: float = 0.05
    init_scale: float = 0.05
    bias_scale: float = 1.5
    variance_scale: float = 2.0
    # Fidelity.
    coherence_honest: float = 2000.0
    coherence_byz: float = 80.0
    process_distance: float = 0.0
    # Entanglement.
    bell_budget: int = 250
    p_gen: float = 0.8
    tau_c_min: float = 3.0
    tau_c_max: float = 6.0
    lifetime_mode: str = "uniform"
    pair_decay_rate: float = 0.2
    scheduler_policy: str = "eef"
    reward_progress: float = 1.0
    reward_latency: float = 0.5
    reward_cost: float = 0.01
    reward_discount: float = 0.95
    # Gossip and topology.
    gossip_depth: int | None = None
    topology_degree: int = 6
    # Checkpoints and trust.
    checkpoint_period: int = 4
    byz_bound: int | None = None
    trust_alpha: float = 0.9
    trust_min: float = 0.2
    tag_detection_prob: float = 0.95
    # Quarantine.
    quarantine_window: int = 5
    threshold_base: float = 100.0
    min_active: int = 15
    readmit_ratio: float = 0.9
    probation_rounds: int = 20
    recover_on_readmit: bool = True
    # Adversary.
    attack_mode: str = "adaptive"
    gaussian_scale: float = 0.6
    flip_factor: float = -1.05
    scale_factor: float = 1.6
    switch_period: int = 50
    attack_cycle: str = "gaussian,flip,scale"
    forge_stamps: bool = True
    # Baseline.
    baseline_fraction: float = 0.5
    baseline_scheduler: str = "random"

    def __post_init__(self):
        self.validate()

    @property
    def depth(self) -> int:
        if self.gossip_depth is not None:
            return self.gossip_depth
        return max(1, math.ceil(math.log2(self.n_nodes))) if self.n_nodes > 1 else 1

    @property
    def fault_bound(self) -> int:
        if self.byz_bound is not None:
            return self.byz_bound
        return max(self.n_nodes // 3 - 1, 0)

    @property
    def quorum(self) -> int:
        return 2 * self.fault_bound + 1

    @property
    def n_honest(self) -> int:
        return min(self.n_nodes, math.ceil(round(self.honest_fraction * self.n_nodes, 9)))

    @property
    def cycle(self) -> tuple[str, ...]:
        return tuple(m.strip() for m in self.attack_cycle.split(",") if m.strip())

    def with_overrides(self, **kw: Any) -> "ExperimentConfig":
        return replace(self, **kw)

    def validate(self) -> None:
        def need(ok: bool, key: str, msg: str) -> None:
            if not ok:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})", key=key)

        need(self.n_nodes >= 2, "n_nodes", "must be >= 2")
        need(self.rounds >= 0, "rounds", "must be >= 0")
        need(0.0 <= self.honest_fraction <= 1.0, "honest_fraction", "must lie in [0, 1]")
        need(self.protocol in PROTOCOLS, "protocol", f"must be one of {PROTOCOLS}")
        for key in ("honest_error", "byz_error", "tag_detection_prob", "p_gen", "trust_min", "readmit_ratio"):
            need(0.0 <= getattr(self, key) <= 1.0, key, "must lie in [0, 1]")
        need(self.honest_error < 1.0, "honest_error", "must be < 1")
        need(self.byz_error < 1.0, "byz_error", "must be < 1")
        need(self.dim >= 1, "dim", "must be >= 1")
        need(self.samples_per_node >= 2, "samples_per_node", "must be >= 2")
        need(self.eval_samples >= 2, "eval_samples", "must be >= 2")
        for key in ("delta_c_honest", "delta_c_byz", "eval_delta_c", "learning_rate"):
            need(getattr(self, key) > 0, key, "must be > 0")
        for key in ("label_noise_honest", "label_noise_byz", "eval_label_noise"):
            need(0.0 <= getattr(self, key) <= 0.5, key, "must lie in [0, 0.5]")
        for key in ("init_scale", "bias_scale", "variance_scale", "process_distance", "pair_decay_rate",
                    "reward_progress", "reward_latency", "reward_cost", "gaussian_scale", "threshold_base"):
            need(getattr(self, key) >= 0, key, "must be >= 0")
        need(self.threshold_base > 0, "threshold_base", "must be > 0")
        for key in ("coherence_honest", "coherence_byz"):
            need(getattr(self, key) > 0, key, "must be > 0")
        need(self.bell_budget >= 0, "bell_budget", "must be >= 0")
        need(self.tau_c_min > 0, "tau_c_min", "must be > 0")
        need(self.tau_c_max >= self.tau_c_min, "tau_c_max", "must be >= tau_c_min")
        need(self.lifetime_mode in LIFETIME_MODES, "lifetime_mode", f"must be one of {LIFETIME_MODES}")
        need(self.scheduler_policy in POLICIES, "scheduler_policy", f"must be one of {POLICIES}")
        need(self.baseline_scheduler in POLICIES, "baseline_scheduler", f"must be one of {POLICIES}")
        need(0.0 < self.reward_discount < 1.0, "reward_discount", "must lie in (0, 1)")
        need(self.gossip_depth is None or self.gossip_depth >= 1, "gossip_depth", "must be >= 1 or auto")
        need(1 <= self.topology_degree < self.n_nodes, "topology_degree", "must lie in [1, n_nodes)")
        need((self.topology_degree * self.n_nodes) % 2 == 0, "topology_degree",
             "degree times n_nodes must be even for a regular graph")
        need(self.checkpoint_period >= 1, "checkpoint_period", "must be >= 1")
        need(self.byz_bound is None or self.byz_bound >= 0, "byz_bound", "must be >= 0 or auto")
        need(0.0 < self.trust_alpha < 1.0, "trust_alpha", "must lie in (0, 1)")
        need(self.quarantine_window >= 1, "quarantine_window", "must be >= 1")
        need(0 <= self.min_active <= self.n_nodes, "min_active", "must lie in [0, n_nodes]")
        need(self.probation_rounds >= 0, "probation_rounds", "must be >= 0")
        need(self.attack_mode in ATTACK_MODES, "attack_mode", f"must be one of {ATTACK_MODES}")
        need(self.switch_period >= 1, "switch_period", "must be >= 1")
        need(all(m in BASE_ATTACKS for m in self.cycle) and len(self.cycle) > 0, "attack_cycle",
             f"must be a comma-separated list of {BASE_ATTACKS}")
        need(0.0 < self.baseline_fraction <= 1.0, "baseline_fraction", "must lie in (0, 1]")


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
OPTIONAL_INT = {"gossip_depth", "byz_bound"}


def _parse_value(key: str, raw: str) -> Any:
    kind = FIELD_TYPES[key]
    text = raw.strip()
    try:
        if key in OPTIONAL_INT:
            return None if text.lower() == "auto" else int(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}", key=key) from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r} on line {lineno}", key=key)
        if key in values:
            raise ConfigError(f"duplicate config key {key!r} on line {lineno}", key=key)
        values[key] = _parse_value(key, raw)
    try:
        return replace(base or ExperimentConfig(), **values)
    except TypeError as exc:  # pragma: no cover - guarded by the key check above
        raise ConfigError(str(exc)) from None


def _format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Render every field as one ``key = value`` line in declaration order."""
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in asdict(config).items())


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text)
