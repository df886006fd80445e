"""Figure rendering for the CLI report paths (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalResult
from .training import LossTerms


def save_loss_curves(epoch_log: tuple[LossTerms, ...], path: str | Path) -> None:
    """Per-epoch classification / quantization / total loss curves."""
    epochs = range(len(epoch_log))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, [t.total for t in epoch_log], label="total", lw=2)
    ax.plot(epochs, [t.classification for t in epoch_log], label="classification", lw=1)
    ax.plot(epochs, [t.quantization for t in epoch_log], label="quantization", lw=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_map_by_bits(rows: list[tuple[int, EvalResult]], path: str | Path) -> None:
    """mAP as a function of code length."""
    bits = [b for b, _ in rows]
    values = [r.map for _, r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.plot(bits, values, marker="o")
    for b, v in zip(bits, values):
        ax.annotate(f"{v:.4f}", (b, v), textcoords="offset points",
                    xytext=(0, 6), ha="center", fontsize=8)
    ax.set_xscale("log", base=2)
    ax.set_xticks(bits)
    ax.get_xaxis().set_major_formatter(plt.ScalarFormatter())
    ax.set_xlabel("code length (bits)")
    ax.set_ylabel("mAP")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
