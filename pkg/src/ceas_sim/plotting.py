"""Static figure of per-protocol accuracy envelopes."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {"ceas": "CEAS", "random-baseline": "Random baseline"}
COLOURS = {"ceas": "tab:blue", "random-baseline": "tab:red"}


def plot_envelopes(agg: dict, out: str | Path) -> None:
    """Mean accuracy per round with a shaded one-std band for each protocol.

    The output is byte-stable for identical input (fixed hash salt, no dates).
    """
    out = Path(out)
    with matplotlib.rc_context({"svg.hashsalt": "ceas-sim", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        for proto in sorted(agg):
            t = agg[proto]
            x, m, s = t["round"], t["accuracy_mean"], t["accuracy_std"]
            colour = COLOURS.get(proto)
            ax.plot(x, m, color=colour, lw=1.5, label=LABELS.get(proto, proto))
            ax.fill_between(x, m - s, m + s, color=colour, alpha=0.25, lw=0)
        ax.set_xlabel("Round")
        ax.set_ylabel("Global accuracy")
        ax.set_ylim(0.4, 0.85)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower right")
        fig.tight_layout()
        meta = {"Date": None} if out.suffix.lower() == ".svg" else {"CreationDate": None}
        fig.savefig(out, metadata=meta)
        plt.close(fig)
