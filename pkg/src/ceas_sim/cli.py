"""Command-line front end: ``run``, ``sweep``, ``plot`` and ``validate``.

Exit codes: 0 success, 1 failed validation, 2 bad configuration or input,
3 consensus stall.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .config import PROTOCOLS, ExperimentConfig, load_config
from .engine import run_experiment
from .errors import ConfigError
from .metrics_io import (
    MetricsFormatError,
    aggregate,
    aggregate_rows,
    metrics_rows,
    read_metrics_csv,
    render_csv,
    run_summary,
    write_csv,
)

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_STALL = 0, 1, 2, 3
THREADS_ENV = "CEAS_THREADS"


def _load(path: str | None) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig()


def _seed_range(text: str) -> list[int]:
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if not m or int(m.group(1)) > int(m.group(2)):
        raise ConfigError(f"--seeds must look like a..b with a <= b, got {text!r}", key="seeds")
    return list(range(int(m.group(1)), int(m.group(2)) + 1))


def worker_count(n_jobs: int) -> int:
    """Parallel workers for a sweep, capped by ``CEAS_THREADS`` when set."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", key=THREADS_ENV) from None
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", key=THREADS_ENV)
    return max(1, min(cap, n_jobs))


def _job(args: tuple[ExperimentConfig, int]):
    cfg, seed = args
    return run_experiment(cfg, seed)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    if args.protocol:
        cfg = cfg.with_overrides(protocol=args.protocol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_experiment(cfg, args.seed)
    stem = f"{cfg.protocol}_seed{args.seed}"
    write_csv(out / f"metrics_{stem}.csv", metrics_rows(trace))
    (out / f"summary_{stem}.txt").write_text(run_summary(trace))
    if trace.stalled_at is not None:
        print(f"consensus stall at round {trace.stalled_at}: no active node carries positive stamp weight", file=sys.stderr)
        return EXIT_STALL
    print(run_summary(trace), end="")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    base = _load(args.config)
    seeds = _seed_range(args.seeds)
    jobs = [(base.with_overrides(protocol=p), s) for p in PROTOCOLS for s in seeds]
    workers = worker_count(len(jobs))
    if workers == 1:
        traces = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_job, jobs))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [row for tr in traces for row in metrics_rows(tr)]
    write_csv(out / "sweep.csv", rows)
    parsed = read_metrics_csv(out / "sweep.csv")
    header, agg_rows = aggregate_rows(aggregate(parsed))
    (out / "aggregate.csv").write_text(render_csv(agg_rows, header))
    (out / "summary.txt").write_text("".join(run_summary(tr) + "\n" for tr in traces))
    stalled = [(tr.config.protocol, tr.seed, tr.stalled_at) for tr in traces if tr.stalled_at is not None]
    print(f"wrote {len(rows)} rows for {len(seeds)} seeds x {len(PROTOCOLS)} protocols to {out}")
    if stalled:
        for proto, seed, t in stalled:
            print(f"consensus stall: protocol={proto} seed={seed} round={t}", file=sys.stderr)
        return EXIT_STALL
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    from .plotting import plot_envelopes

    rows = read_metrics_csv(args.inp)
    if not rows:
        raise MetricsFormatError(f"{args.inp}: no data rows")
    plot_envelopes(aggregate(rows), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _broken_weights(traces):
    # Negative control: uniform weights ignore the noise level.
    import numpy as np

    return np.full(len(traces), 1.0 / len(traces))


def cmd_validate(args: argparse.Namespace) -> int:
    from .consensus import optimal_inverse_variance_weights
    from .validation import run_all

    weights_fn = _broken_weights if args.inject_fault == "inverse-variance" else optimal_inverse_variance_weights
    results = run_all(weights_fn)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ceas-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", help="key = value config file (defaults if omitted)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="results")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run both protocols over a seed range")
    p.add_argument("--config")
    p.add_argument("--seeds", default="1..10", help="inclusive range a..b")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="mean accuracy with std envelopes from a sweep CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="image path; .svg or .pdf")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", help="run the oracle checks")
    p.add_argument("--inject-fault", choices=["inverse-variance"], help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetricsFormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
