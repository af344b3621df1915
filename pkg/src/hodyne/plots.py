"""Figure rendering for limit curves and sweep results (files only, no GUI)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_VARIANT_STYLE = {
    "hd-cnn": dict(color="tab:red", linestyle="--", marker="o", label="HD-CNN"),
    "hd-gnn-cnn": dict(color="tab:blue", linestyle="-", marker="s", label="HD-GNN-CNN"),
}


def plot_limits(rows: list[dict], path: str | Path) -> None:
    """Analytic bounds versus signal strength in dB (log-scale probabilities)."""
    db = [r["alpha_db"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.semilogy(db, [r["p_hd"] for r in rows], color="tab:green", label="homodyne limit")
    ax.semilogy(db, [r["p_hel"] for r in rows], color="black", label="Helstrom limit")
    ax.set_xlabel("signal strength (dB)")
    ax.set_ylabel("error probability")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep_rows(rows, path: str | Path) -> None:
    """Relative error versus sweep coordinate, one curve per receiver variant.

    Horizontal context: the relative homodyne limit per message level and the
    zero line where the Helstrom limit sits by construction.
    """
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for variant, style in _VARIANT_STYLE.items():
        pts = sorted(
            (r.coordinate, r.p_relative) for r in rows if r.variant == variant
        )
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], markersize=3.5, **style)
    for message_db in sorted({r.message_db for r in rows}):
        level = next(r.p_relative_hd for r in rows if r.message_db == message_db)
        ax.axhline(
            level,
            color="tab:green",
            linestyle=":",
            linewidth=1,
            label=f"relative HD limit ({message_db:+.2f} dB)",
        )
    ax.axhline(0.0, color="black", linewidth=1, label="Helstrom (zero)")
    ax.set_xlabel("sweep coordinate")
    ax.set_ylabel("relative error probability")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
