"""Fidelity stamps, weighted aggregation and gossip mixing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import ConnectivityError, ConsensusStall, DomainError, ShapeError


@dataclass(frozen=True)
class FidelityStamp:
    """Per-node reliability summary.

    Attributes:
        node: Node id.
        fidelity: Scalar fidelity in (0, 1].
        qfi_proxy: Optional configured information proxy (not used in the value).
        process_distance: Nonnegative distance that discounts the stamp.
    """

    node: int
    fidelity: float
    qfi_proxy: float = 0.0
    process_distance: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.fidelity <= 1.0:
            raise DomainError(f"fidelity {self.fidelity} outside (0, 1]")
        if self.process_distance < 0 or self.qfi_proxy < 0:
            raise DomainError("process_distance and qfi_proxy must be >= 0")

    @property
    def value(self) -> float:
        return self.fidelity * float(np.exp(-self.process_distance))


def stamp_values(stamps: Sequence[FidelityStamp] | np.ndarray) -> np.ndarray:
    """Stamp values as an array; plain arrays pass through."""
    if isinstance(stamps, np.ndarray):
        return stamps.astype(float)
    return np.array([s.value for s in stamps], dtype=float)


def _mask(quarantined: Iterable[int] | np.ndarray | None, n: int) -> np.ndarray:
    if quarantined is None:
        return np.zeros(n, dtype=bool)
    if isinstance(quarantined, np.ndarray) and quarantined.dtype == bool:
        if quarantined.shape != (n,):
            raise ShapeError("quarantine mask must have one entry per node")
        return quarantined.copy()
    mask = np.zeros(n, dtype=bool)
    mask[np.array(sorted(int(k) for k in quarantined), dtype=np.int64)] = True
    return mask


def normalize_weights(stamps, quarantined=None) -> np.ndarray:
    """Weights proportional to stamp values, zero for quarantined nodes.

    Raises:
        ConsensusStall: If no eligible node has a positive stamp.
    """
    phi = stamp_values(stamps)
    mask = _mask(quarantined, len(phi))
    w = np.where(mask, 0.0, phi)
    total = w.sum()
    if not total > 0:
        raise ConsensusStall("no active node with a positive stamp")
    return w / total


def aggregate(gradients: Sequence[np.ndarray] | np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of per-node vectors."""
    g = np.asarray(gradients, dtype=float)
    w = np.asarray(weights, dtype=float)
    if g.ndim != 2 or g.shape[0] != w.shape[0]:
        raise ShapeError(f"cannot aggregate {g.shape} with {w.shape} weights")
    return w @ g


def optimal_inverse_variance_weights(traces: Sequence[float]) -> np.ndarray:
    """Weights proportional to the inverse noise-covariance trace."""
    t = np.asarray(traces, dtype=float)
    if t.size == 0 or np.any(~(t > 0)):
        raise DomainError("all traces must be positive")
    inv = 1.0 / t
    return inv / inv.sum()


def aggregate_variance(weights: np.ndarray, traces: np.ndarray) -> float:
    """Total variance of a weighted sum of independent noisy vectors."""
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * w * np.asarray(traces, dtype=float)))


def _edge_array(topology, n: int) -> np.ndarray:
    if isinstance(topology, nx.Graph):
        edges = np.array([(min(u, v), max(u, v)) for u, v in topology.edges() if u != v], dtype=np.int64)
    else:
        a = np.asarray(topology)
        if a.ndim == 2 and a.shape == (n, n):
            iu = np.argwhere(np.triu(a, 1) != 0)
            edges = iu.astype(np.int64)
        else:
            edges = a.astype(np.int64).reshape(-1, 2)
    return edges.reshape(-1, 2)


def mixing_from_edges(edges: np.ndarray, phi: np.ndarray, quarantined: np.ndarray) -> np.ndarray:
    """Stamp-scaled Metropolis matrix over the given edge list.

    ``W[k, j] = (phi_j / phi_max) / (1 + max(deg_k, deg_j))`` on active edges,
    the diagonal takes the remainder. Quarantined rows are identity rows and
    quarantined columns are zero off the diagonal.
    """
    n = len(phi)
    w = np.zeros((n, n))
    if len(edges):
        keep = ~quarantined[edges[:, 0]] & ~quarantined[edges[:, 1]]
        e = edges[keep]
    else:
        e = edges
    if len(e):
        deg = np.bincount(e.ravel(), minlength=n)
        active_phi = phi[~quarantined]
        scale = phi / active_phi.max() if active_phi.size and active_phi.max() > 0 else np.zeros(n)
        denom = 1.0 + np.maximum(deg[e[:, 0]], deg[e[:, 1]])
        w[e[:, 0], e[:, 1]] = scale[e[:, 1]] / denom
        w[e[:, 1], e[:, 0]] = scale[e[:, 0]] / denom
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def build_mixing_matrix(topology, stamps, quarantined=None, require_connected: bool = True) -> np.ndarray:
    """Row-stochastic mixing matrix on ``topology`` weighted by stamp values.

    Args:
        topology: ``networkx`` graph, adjacency matrix or ``(m, 2)`` edge array.
        stamps: Stamps or stamp values, one per node.
        quarantined: Ids or boolean mask of excluded nodes.
        require_connected: Raise if the active subgraph is disconnected.

    Raises:
        ConnectivityError: Active subgraph disconnected and ``require_connected``.
    """
    phi = stamp_values(stamps)
    n = len(phi)
    mask = _mask(quarantined, n)
    edges = _edge_array(topology, n)
    if require_connected:
        g = nx.Graph()
        active = np.flatnonzero(~mask)
        g.add_nodes_from(active.tolist())
        g.add_edges_from((int(u), int(v)) for u, v in edges if not mask[u] and not mask[v])
        if len(active) == 0 or not nx.is_connected(g):
            raise ConnectivityError("active subgraph is disconnected")
    return mixing_from_edges(edges, phi, mask)


def gossip_round(params, topology, stamps, quarantined=None, depth: int = 1, edge_masks=None) -> np.ndarray:
    """Apply ``depth`` mixing steps, rebuilding the matrix each step.

    Args:
        params: ``(n, p)`` parameter vectors.
        topology: Graph, adjacency matrix or edge array.
        stamps: Stamps or stamp values.
        quarantined: Ids or mask of excluded nodes.
        depth: Number of mixing steps.
        edge_masks: Optional ``(depth, m)`` booleans marking which edges hold
            a Bell pair at each step; missing pairs drop the edge.
    """
    if depth < 1:
        raise DomainError("depth must be >= 1")
    x = np.asarray(params, dtype=float).copy()
    phi = stamp_values(stamps)
    n = len(phi)
    if x.shape[0] != n:
        raise ShapeError("one parameter vector per node is required")
    mask = _mask(quarantined, n)
    edges = _edge_array(topology, n)
    for step in range(depth):
        e = edges if edge_masks is None else edges[np.asarray(edge_masks[step], dtype=bool)]
        x = mixing_from_edges(e, phi, mask) @ x
    return x


def stationary_distribution(w: np.ndarray) -> np.ndarray:
    """Left eigenvector of ``w`` for eigenvalue 1, normalised to sum to 1."""
    vals, vecs = np.linalg.eig(np.asarray(w).T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, k])
    return pi / pi.sum()
