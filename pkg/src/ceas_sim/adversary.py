"""Byzantine attacks, tag verification, trust scores and divergence quarantine."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError

BASE_ATTACKS = ("gaussian", "flip", "scale")
ATTACK_MODES = BASE_ATTACKS + ("adaptive",)


@dataclass(frozen=True)
class AttackSpec:
    """Attack behaviour of Byzantine nodes.

    Attributes:
        mode: One of ``gaussian``, ``flip``, ``scale`` or ``adaptive``.
        gaussian_scale: Noise std as a multiple of the honest weight spread.
        flip_factor: Multiplier of the reversal attack.
        scale_factor: Multiplier of the scaling attack.
        switch_period: Rounds between mode changes in adaptive mode.
        cycle: Order the adaptive adversary steps through.
    """

    mode: str = "adaptive"
    gaussian_scale: float = 0.6
    flip_factor: float = -1.05
    scale_factor: float = 1.6
    switch_period: int = 20
    cycle: tuple[str, ...] = ("gaussian", "flip", "scale")

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise ConfigError(f"unknown attack mode {self.mode!r}", key="attack_mode")
        if self.gaussian_scale < 0:
            raise ConfigError("gaussian_scale must be >= 0", key="gaussian_scale")
        if self.switch_period < 1:
            raise ConfigError("switch_period must be >= 1", key="switch_period")
        if not self.cycle or any(m not in BASE_ATTACKS for m in self.cycle):
            raise ConfigError(f"attack cycle must list modes from {BASE_ATTACKS}", key="attack_cycle")


def attack_mode_at(spec: AttackSpec, round: int) -> str:
    """Concrete mode in force at ``round`` (rounds count from 1)."""
    if spec.mode != "adaptive":
        return spec.mode
    return spec.cycle[((round - 1) // spec.switch_period) % len(spec.cycle)]


def apply_attack(params: np.ndarray, spec: AttackSpec, sigma_w, round: int, rng: np.random.Generator) -> np.ndarray:
    """Corrupt ``params`` (one vector or a stack of rows) as the adversary would.

    Args:
        params: Parameter vector or ``(k, p)`` stack.
        spec: Attack behaviour.
        sigma_w: Honest weight spread, a scalar or one value per coordinate.
        round: Current round (1-based), selects the adaptive mode.
        rng: Stream for the Gaussian attack.
    """
    if np.any(np.asarray(sigma_w) < 0):
        raise ConfigError("sigma_w must be >= 0")
    p = np.asarray(params, dtype=float)
    mode = attack_mode_at(spec, round)
    if mode == "flip":
        return spec.flip_factor * p
    if mode == "scale":
        return spec.scale_factor * p
    return p + spec.gaussian_scale * sigma_w * rng.standard_normal(p.shape)


@dataclass(frozen=True)
class AuthTag:
    """Authentication tag over a payload; ``tampered`` is simulator ground truth."""

    digest: str
    tampered: bool = False
    detection_prob: float = 0.95

    @classmethod
    def for_payload(cls, payload: np.ndarray, tampered: bool = False, detection_prob: float = 0.95) -> "AuthTag":
        digest = hashlib.sha256(np.ascontiguousarray(payload, dtype=float).tobytes()).hexdigest()
        return cls(digest, tampered, detection_prob)


def verify_tag(tag: AuthTag, rng: np.random.Generator) -> int:
    """1 if the tag verifies. Untampered tags always do."""
    if not tag.tampered:
        return 1
    return 0 if rng.random() < tag.detection_prob else 1


def verify_many(tampered: np.ndarray, detection_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`verify_tag`; draws one uniform per node."""
    u = rng.random(len(tampered))
    return np.where(np.asarray(tampered, dtype=bool) & (u < detection_prob), 0, 1)


@dataclass(frozen=True)
class TrustState:
    """Exponential moving average of verification outcomes."""

    trust: float = 1.0
    alpha: float = 0.9
    history: tuple[int, ...] = ()
    history_len: int = 16

    def __post_init__(self):
        if not 0.0 <= self.trust <= 1.0:
            raise ConfigError("trust must lie in [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)", key="trust_alpha")


def trust_ema(trust, v, alpha: float):
    """``alpha * trust + (1 - alpha) * v``; works on scalars and arrays."""
    return alpha * trust + (1.0 - alpha) * v


def update_trust(state: TrustState, v: int) -> TrustState:
    """Fold one verification outcome into the trust score."""
    if v not in (0, 1):
        raise ConfigError("verification outcome must be 0 or 1")
    hist = (state.history + (int(v),))[-state.history_len:]
    return replace(state, trust=trust_ema(state.trust, v, state.alpha), history=hist)


def kl_divergence(node_params: np.ndarray, global_params: np.ndarray, sigma_sq: float) -> float:
    """KL between isotropic Gaussians with shared variance centred at the two vectors."""
    a = np.asarray(node_params, dtype=float)
    b = np.asarray(global_params, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if not sigma_sq > 0:
        raise ConfigError("sigma_sq must be > 0")
    d = a - b
    return float(d @ d / (2.0 * sigma_sq))


def kl_divergences(params: np.ndarray, reference: np.ndarray, sigma_sq: float) -> np.ndarray:
    """Row-wise :func:`kl_divergence` against one reference vector."""
    d = np.asarray(params, dtype=float) - np.asarray(reference, dtype=float)
    return np.einsum("ij,ij->i", d, d) / (2.0 * sigma_sq)


def divergence_threshold(fidelity, threshold_base: float):
    """Quarantine threshold, looser for low-fidelity nodes."""
    return threshold_base / np.maximum(fidelity, 0.1)


@dataclass
class QuarantineState:
    """Rolling divergence windows and the quarantine set.

    Attributes:
        window: Number of recent divergences summed.
        history: ``(n, window)`` divergence ring, newest in the last column.
        quarantined: Boolean mask of quarantined nodes.
        threshold_base: Base of the fidelity-dependent threshold.
        min_active: Re-admit nodes whenever fewer than this are active.
        initial_fidelity: Fidelity each node started with.
        readmit_ratio: Fidelity bar for re-admission, as a share of the initial value.
        probation: Minimum rounds spent in quarantine before a fidelity re-admission.
        since: Round each node was last quarantined.
        ever: Nodes quarantined at least once.
    """

    window: int
    history: np.ndarray
    quarantined: np.ndarray
    threshold_base: float
    min_active: int
    initial_fidelity: np.ndarray
    readmit_ratio: float = 0.9
    probation: int = 0
    since: np.ndarray = field(default=None)
    ever: np.ndarray = field(default=None)

    @classmethod
    def create(cls, n: int, window: int = 5, threshold_base: float = 1.0, min_active: int = 15,
               initial_fidelity=None, readmit_ratio: float = 0.9, probation: int = 0) -> "QuarantineState":
        f0 = np.ones(n) if initial_fidelity is None else np.asarray(initial_fidelity, dtype=float).copy()
        return cls(window, np.zeros((n, window)), np.zeros(n, dtype=bool), threshold_base, min_active,
                   f0, readmit_ratio, probation, np.full(n, -(10**9), dtype=np.int64), np.zeros(n, dtype=bool))

    def __post_init__(self):
        n = len(self.quarantined)
        if self.since is None:
            self.since = np.full(n, -(10**9), dtype=np.int64)
        if self.ever is None:
            self.ever = np.zeros(n, dtype=bool)

    @property
    def n(self) -> int:
        return len(self.quarantined)

    def copy(self) -> "QuarantineState":
        return replace(self, history=self.history.copy(), quarantined=self.quarantined.copy(),
                       initial_fidelity=self.initial_fidelity.copy(), since=self.since.copy(), ever=self.ever.copy())


@dataclass(frozen=True)
class QuarantineEvents:
    """Node ids newly quarantined and re-admitted in one step."""

    quarantined: tuple[int, ...] = ()
    readmitted: tuple[int, ...] = ()


def quarantine_step(
    q: QuarantineState,
    fidelities: np.ndarray,
    divergences: np.ndarray,
    n_active: int | None = None,
    *,
    stamps: np.ndarray | None = None,
    trust: np.ndarray | None = None,
    trust_min: float = 0.0,
    now: int = 0,
) -> tuple[QuarantineState, QuarantineEvents]:
    """Advance the quarantine state by one round.

    Divergences of active nodes are pushed into their windows, then:

    1. quarantined nodes whose fidelity exceeds ``readmit_ratio`` times
       their initial value (after ``probation`` rounds) are re-admitted;
    2. active nodes whose window sum exceeds the threshold, or whose trust
       fell below ``trust_min``, are quarantined;
    3. if fewer than ``min_active`` nodes remain active, quarantined nodes
       are re-admitted lowest id first until the floor is met.

    Re-admission clears the divergence history. Trust resets are the
    caller's job, driven by ``events.readmitted``.

    Args:
        q: Current state (not modified).
        fidelities: Fidelity used for the re-admission bar.
        divergences: This round's divergence per node.
        n_active: Active count before the step; defaults to the state's count.
        stamps: Fidelity the threshold is evaluated at; defaults to ``fidelities``.
        trust: Optional trust scores.
        trust_min: Trust floor below which a node is excluded.
        now: Current round, used for probation.
    """
    s = q.copy()
    fid = np.asarray(fidelities, dtype=float)
    div = np.asarray(divergences, dtype=float)
    if fid.shape != (s.n,) or div.shape != (s.n,):
        raise ShapeError("one fidelity and one divergence per node required")
    if np.any(div < 0):
        raise ValueError("divergences must be nonnegative")
    active = ~s.quarantined
    s.history = np.roll(s.history, -1, axis=1)
    s.history[:, -1] = np.where(active, div, 0.0)

    readmit = s.quarantined & (fid > s.readmit_ratio * s.initial_fidelity) & (now - s.since >= s.probation)

    stamp_f = fid if stamps is None else np.asarray(stamps, dtype=float)
    over = s.history.sum(axis=1) > divergence_threshold(stamp_f, s.threshold_base)
    if trust is not None:
        over |= np.asarray(trust) < trust_min
    newly = active & over

    s.quarantined = (s.quarantined & ~readmit) | newly
    # Never quarantine everyone: keep the lowest-id flagged node if needed.
    if s.quarantined.all():
        first = int(np.flatnonzero(newly)[0]) if newly.any() else 0
        s.quarantined[first] = False
        newly[first] = False
    floor_readmit = np.zeros(s.n, dtype=bool)
    n_now = int((~s.quarantined).sum())
    if n_active is not None:
        n_now = min(n_now, n_active + int(readmit.sum()) - int(newly.sum()))
    deficit = s.min_active - n_now
    if deficit > 0:
        for k in np.flatnonzero(s.quarantined)[:deficit]:
            floor_readmit[k] = True
        s.quarantined &= ~floor_readmit
    back = readmit | floor_readmit
    newly &= s.quarantined
    s.history[back | newly] = 0.0
    s.since[newly] = now
    s.ever |= newly
    return s, QuarantineEvents(tuple(np.flatnonzero(newly).tolist()), tuple(np.flatnonzero(back).tolist()))
