"""PNG figures for the experiment outputs, rendered off-screen."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ddlm.harness.metrics import read_metrics  # noqa: E402


def _series(path, column: str):
    rows, _ = read_metrics(path)
    pts = [(int(r["step"]), float(r[column])) for r in rows if r.get(column) is not None]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_compare_init(scratch_csv, arinit_csv, out_png, column: str = "heldout_loss", warmup_step: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for path, label in ((scratch_csv, "random init"), (arinit_csv, "AR init")):
        x, y = _series(path, column)
        ax.plot(x, y, label=label)
    if warmup_step:
        ax.axvline(warmup_step, color="grey", linestyle=":", linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel(column.replace("_", " "))
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(out_png)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_quality_speed(rows, out_png, baseline: float | None = None) -> Path:
    """Solve rate against forward passes, one marker per seed plus the seed mean."""
    ks = sorted({int(r["K"]) for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([int(r["K"]) for r in rows], [float(r["solve_rate"]) for r in rows], alpha=0.4, s=14, label="per seed")
    means = [sum(float(r["solve_rate"]) for r in rows if int(r["K"]) == k) / sum(1 for r in rows if int(r["K"]) == k) for k in ks]
    ax.plot(ks, means, marker="o", label="mean over seeds")
    if baseline is not None:
        ax.axhline(baseline, color="grey", linestyle=":", label="random baseline")
    ax.set_xscale("log", base=2)
    ax.set_xticks(ks)
    ax.set_xticklabels([str(k) for k in ks])
    ax.set_xlabel("decoding steps K (forward passes)")
    ax.set_ylabel("solve rate")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(out_png)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
