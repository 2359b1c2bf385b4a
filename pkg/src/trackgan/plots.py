"""Report figures rendered straight to PNG files (no display backend needed)."""
from __future__ import annotations

from pathlib import Path

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .metrics import TABLE_HEADERS, MetricsReport
from .training import EpochRecord

_PNG_META = {"Software": None}


def _save(fig: Figure, path: str | Path) -> Path:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    return Path(path)


def history_figure(history: list[EpochRecord], band: float, path: str | Path) -> Path:
    epochs = [r.epoch for r in history]
    fig = Figure(figsize=(9, 3.6))
    ax_loss, ax_acc = fig.subplots(1, 2)
    ax_loss.plot(epochs, [r.l_adv_g for r in history], marker="o", label="generator adversarial")
    ax_loss.plot(epochs, [r.l_adv_d for r in history], marker="o", label="critic")
    ax_loss.plot(epochs, [r.l_domain for r in history], marker="o", label="domain (MSE)")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(fontsize=8)

    ax_acc.axhspan(0.5 - band, 0.5 + band, color="tab:green", alpha=0.15, label="equilibrium band")
    ax_acc.axhline(0.5, color="tab:green", lw=0.8)
    ax_acc.plot(epochs, [r.d_accuracy for r in history], marker="o", color="tab:red", label="critic pixel accuracy")
    ax_acc.set_ylim(0, 1)
    ax_acc.set_xlabel("epoch")
    ax_acc.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def metrics_figure(report: MetricsReport, path: str | Path, title: str = "") -> Path:
    fig = Figure(figsize=(6, 3.4))
    ax = fig.subplots()
    values = report.values()
    bars = ax.bar(TABLE_HEADERS, values, color="tab:blue")
    for bar, v in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_title(title or f"{report.mode} aggregation")
    ax.tick_params(axis="x", labelsize=8)
    fig.tight_layout()
    return _save(fig, path)


def complexity_figure(params_m: float, flops_g: float, published: list[dict[str, str]], path: str | Path) -> Path:
    """Params against FLOPs for this build next to the published reference points."""
    fig = Figure(figsize=(5.5, 4))
    ax = fig.subplots()
    for row in published:
        if row["flops_g"] and row["params_m"]:
            x, y = float(row["flops_g"]), float(row["params_m"])
            ax.scatter(x, y, color="gray", s=18)
            ax.annotate(row["method"], (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.scatter(flops_g, params_m, color="tab:red", s=40, label="this build")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("FLOPs (G)")
    ax.set_ylabel("Params (M)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
