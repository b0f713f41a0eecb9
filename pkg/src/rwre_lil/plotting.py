"""Figures written next to the CSV outputs of the `lil` stage."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata so repeated runs write identical PNG bytes
_PNG_META = {"Software": None}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.0,
}


def _size(scale=1.0):
    width = 6.0 * scale
    return width, width * (np.sqrt(5.0) - 1.0) / 2.0


def _u_label(u) -> str:
    return "(" + ", ".join(f"{x:g}" for x in u) + ")"


def render_lil_figures(curves, table, u, outdir, suffix="", max_paths=50) -> list[str]:
    """LIL paths with their cross-replica envelope, and the decay of the two
    error terms. Returns the file names written."""
    outdir = Path(outdir)
    names = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size())
        n = table.checkpoints
        for c in curves[:max_paths]:
            ax.plot(n, c.statistic, color="0.6", alpha=0.5, lw=0.6)
        ax.plot(n, table.stat_max, color="C3", label="max over replicas")
        ax.plot(n, table.stat_min, color="C0", label="min over replicas")
        for level in (-1.0, 1.0):
            ax.axhline(level, color="k", ls=":", lw=0.8)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("n")
        ax.set_ylabel("normalised (X_n - n v) . u")
        ax.set_title(f"u = {_u_label(u)}; +-1 is reached only at log log speed", fontsize=9)
        ax.legend(frameon=False)
        fig.tight_layout()
        name = f"lil_curves{suffix}.png"
        fig.savefig(outdir / name, dpi=120, metadata=_PNG_META)
        plt.close(fig)
        names.append(name)

        fig, ax = plt.subplots(figsize=_size())
        for col, label, color in [
            (table.q99_abs_t2, "q99 |term2|", "C1"),
            (table.q99_abs_t3, "q99 |term3|", "C2"),
            (table.q50_abs_t2, "median |term2|", "C1"),
            (table.q50_abs_t3, "median |term3|", "C2"),
        ]:
            ls = "-" if label.startswith("q99") else "--"
            ok = np.isfinite(col) & (col > 0)
            if ok.any():
                ax.plot(n[ok], col[ok], ls=ls, color=color, label=label, marker="o", ms=2.5)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("|error term|")
        ax.legend(frameon=False)
        fig.tight_layout()
        name = f"error_terms{suffix}.png"
        fig.savefig(outdir / name, dpi=120, metadata=_PNG_META)
        plt.close(fig)
        names.append(name)
    return names
