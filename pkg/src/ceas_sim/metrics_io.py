"""Metrics CSV schema, aggregation across seeds and run summaries."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import RoundMetrics, RunTrace
from .errors import SimulationError

CSV_HEADER = (
    "round",
    "protocol",
    "seed",
    "accuracy",
    "utilisation",
    "isolation_rate",
    "active_nodes",
    "mean_fidelity",
    "checkpoint_committed",
)
AGG_METRICS = ("accuracy", "utilisation", "isolation_rate", "active_nodes", "mean_fidelity")
PROTOCOL_ORDER = ("ceas", "random-baseline")


class MetricsFormatError(SimulationError):
    """A metrics CSV does not follow the schema."""


def _fmt(x: float | None) -> str:
    return "" if x is None else format(x, ".12g")


def metrics_rows(trace: RunTrace) -> list[dict[str, str]]:
    """One string-valued row per round of ``trace``."""
    proto = trace.config.protocol
    return [_row(m, proto, trace.seed) for m in trace.metrics]


def _row(m: RoundMetrics, protocol: str, seed: int) -> dict[str, str]:
    return {
        "round": str(m.round),
        "protocol": protocol,
        "seed": str(seed),
        "accuracy": _fmt(m.accuracy),
        "utilisation": _fmt(m.utilisation),
        "isolation_rate": _fmt(m.isolation_rate),
        "active_nodes": str(m.active_nodes),
        "mean_fidelity": _fmt(m.mean_fidelity),
        "checkpoint_committed": "1" if m.checkpoint_committed else "0",
    }


def render_csv(rows: Iterable[dict[str, str]], header: Sequence[str] = CSV_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(path: str | Path, rows: Iterable[dict[str, str]], header: Sequence[str] = CSV_HEADER) -> None:
    Path(path).write_text(render_csv(rows, header))


def read_metrics_csv(path: str | Path) -> list[dict]:
    """Parse a metrics CSV, converting numeric columns.

    Raises:
        MetricsFormatError: Missing file, wrong header or unparsable values.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MetricsFormatError(f"cannot read {path}: {exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise MetricsFormatError(f"{path}: header must be {','.join(CSV_HEADER)}")
    rows = []
    for lineno, raw in enumerate(reader, 2):
        try:
            rows.append({
                "round": int(raw["round"]),
                "protocol": raw["protocol"],
                "seed": int(raw["seed"]),
                "accuracy": float(raw["accuracy"]),
                "utilisation": float(raw["utilisation"]) if raw["utilisation"] else float("nan"),
                "isolation_rate": float(raw["isolation_rate"]),
                "active_nodes": int(raw["active_nodes"]),
                "mean_fidelity": float(raw["mean_fidelity"]),
                "checkpoint_committed": int(raw["checkpoint_committed"]),
            })
        except (TypeError, ValueError) as exc:
            raise MetricsFormatError(f"{path}, line {lineno}: {exc}") from None
    return rows


def aggregate(rows: Iterable[dict]) -> dict[str, dict[str, np.ndarray]]:
    """Per-protocol, per-round mean and population std over seeds.

    Returns:
        ``{protocol: {"round": ..., "<metric>_mean": ..., "<metric>_std": ..., "n_seeds": ...}}``
    """
    buckets: dict[str, dict[int, list[dict]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        buckets[r["protocol"]][r["round"]].append(r)
    out = {}
    for proto, by_round in buckets.items():
        rounds = sorted(by_round)
        table = {"round": np.array(rounds), "n_seeds": np.array([len(by_round[t]) for t in rounds])}
        for key in AGG_METRICS:
            vals = [np.array([r[key] for r in by_round[t]], dtype=float) for t in rounds]
            table[f"{key}_mean"] = np.array([v.mean() for v in vals])
            table[f"{key}_std"] = np.array([v.std() for v in vals])
        out[proto] = table
    return out


def aggregate_rows(agg: dict[str, dict[str, np.ndarray]]) -> tuple[list[str], list[dict[str, str]]]:
    """Flatten :func:`aggregate` output into CSV rows ordered by protocol then round."""
    header = ["round", "protocol", "n_seeds"] + [f"{k}_{s}" for k in AGG_METRICS for s in ("mean", "std")]
    rows = []
    for proto in sorted(agg, key=lambda p: (PROTOCOL_ORDER.index(p) if p in PROTOCOL_ORDER else 99, p)):
        table = agg[proto]
        for i, t in enumerate(table["round"]):
            row = {"round": str(int(t)), "protocol": proto, "n_seeds": str(int(table["n_seeds"][i]))}
            for k in header[3:]:
                row[k] = _fmt(float(table[k][i]))
            rows.append(row)
    return header, rows


def run_summary(trace: RunTrace) -> str:
    """Human-readable digest of one run."""
    lines = [f"protocol = {trace.config.protocol}", f"seed = {trace.seed}", f"rounds_completed = {len(trace.metrics)}"]
    if trace.metrics:
        last = trace.metrics[-1]
        lines += [
            f"final_accuracy = {last.accuracy:.6f}",
            f"final_100_round_mean_accuracy = {np.mean([m.accuracy for m in trace.metrics[-100:]]):.6f}",
            f"bell_utilisation = {_fmt(last.utilisation) or 'n/a'}",
            f"final_isolation_rate = {last.isolation_rate:.6f}",
            f"final_active_nodes = {last.active_nodes}",
        ]
    committed = sum(c.committed for c in trace.checkpoints)
    lines.append(f"checkpoints_committed = {committed}/{len(trace.checkpoints)}")
    if trace.stalled_at is not None:
        lines.append(f"stalled_at_round = {trace.stalled_at}")
    return "\n".join(lines) + "\n"
