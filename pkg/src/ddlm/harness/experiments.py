"""Experiment drivers: AR-init vs scratch, and the quality-speed sweep."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ddlm.errors import UsageError
from ddlm.harness.config import RunConfig
from ddlm.harness.evaluate import evaluate, load_model
from ddlm.harness.metrics import read_metrics
from ddlm.harness.train import TrainResult, load_data, train
from ddlm.sampler import DecodeConfig

SWEEP_COLUMNS = ("K", "seed", "solve_rate", "passes", "passes_per_instance", "wallclock_s", "tokens_per_s", "n_instances")
WARMUP_FRACTION = 0.1


def sweep_quality_speed(
    checkpoint,
    task: str,
    steps_list,
    seeds,
    heldout_path,
    out_csv,
    *,
    n_instances: int = 200,
    strategy: str = "max_confidence",
    temperature: float = 0.0,
) -> list[dict]:
    """One evaluation per ``(K, seed)``; rows are written to ``out_csv`` as they finish."""
    model = load_model(checkpoint)
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for k in steps_list:
            for seed in seeds:
                cfg = DecodeConfig(steps=int(k), strategy=strategy, temperature=temperature, seed=int(seed))
                rep = evaluate(checkpoint, task, cfg, n_instances, heldout_path, model=model)
                per = sorted(set(rep.passes_per_instance))
                row = {
                    "K": int(k),
                    "seed": int(seed),
                    "solve_rate": rep.solve_rate,
                    "passes": rep.forward_passes,
                    "passes_per_instance": per[0] if len(per) == 1 else "/".join(map(str, per)),
                    "wallclock_s": round(rep.wallclock_s, 6),
                    "tokens_per_s": round(rep.tokens_per_s, 3),
                    "n_instances": rep.n_instances,
                }
                writer.writerow(row)
                fh.flush()
                rows.append(row)
    return rows


def read_sweep(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["K"], r["seed"], r["passes"], r["n_instances"] = int(r["K"]), int(r["seed"]), int(r["passes"]), int(r["n_instances"])
        r["solve_rate"], r["wallclock_s"] = float(r["solve_rate"]), float(r["wallclock_s"])
    return rows


def sweep_means(rows) -> dict[int, dict]:
    """Per-K averages over seeds."""
    out: dict[int, dict] = {}
    for k in sorted({r["K"] for r in rows}):
        sel = [r for r in rows if r["K"] == k]
        out[k] = {
            "solve_rate": float(np.mean([float(r["solve_rate"]) for r in sel])),
            "wallclock_s": float(np.mean([float(r["wallclock_s"]) for r in sel])),
            "seeds": len(sel),
        }
    return out


def check_init_pair(scratch: RunConfig, arinit: RunConfig):
    """Raise UsageError unless the two configs differ only in their init checkpoint."""
    diff = scratch.diff(arinit, ignore=("init_checkpoint",))
    if diff:
        lines = "; ".join(f"{k}: {a!r} != {b!r}" for k, a, b in ((k, *v) for k, v in diff.items()))
        raise UsageError(f"compare_init configs differ beyond init: {lines}")
    if scratch.mode == "ar_pretrain":
        raise UsageError("compare_init needs diffusion-mode configs")
    if scratch.init_checkpoint:
        raise UsageError("the from-scratch config must not set init_checkpoint")
    if not arinit.init_checkpoint:
        raise UsageError("the AR-init config needs init_checkpoint")


@dataclass
class CompareResult:
    scratch: TrainResult
    arinit: TrainResult
    summary: dict


def init_summary(scratch_csv, arinit_csv, total_steps: int, column: str = "heldout_loss") -> dict:
    """Fraction of logged steps past the warmup window where AR-init <= scratch."""
    a_rows, _ = read_metrics(scratch_csv)
    b_rows, _ = read_metrics(arinit_csv)
    a = {int(r["step"]): r for r in a_rows}
    b = {int(r["step"]): r for r in b_rows}
    cutoff = WARMUP_FRACTION * total_steps
    steps = sorted(s for s in set(a) & set(b) if s > cutoff and a[s][column] is not None and b[s][column] is not None)
    wins = [float(b[s][column]) <= float(a[s][column]) for s in steps]
    return {
        "column": column,
        "warmup_cutoff": cutoff,
        "points": len(steps),
        "arinit_le_scratch": int(sum(wins)),
        "fraction": float(np.mean(wins)) if wins else float("nan"),
        "losing_steps": [s for s, w in zip(steps, wins) if not w],
    }


def compare_init(scratch: RunConfig, arinit: RunConfig, out_dir, data=None) -> CompareResult:
    """Train both arms on the same data order and compare their loss curves."""
    check_init_pair(scratch, arinit)
    out_dir = Path(out_dir)
    data = data if data is not None else load_data(scratch)
    res_s = train(scratch, out_dir / "scratch", data=data)
    res_a = train(arinit, out_dir / "arinit", data=data)
    summary = {
        "heldout": init_summary(res_s.metrics_path, res_a.metrics_path, scratch.total_steps, "heldout_loss"),
        "train": init_summary(res_s.metrics_path, res_a.metrics_path, scratch.total_steps, "loss"),
        "scratch_config_sha256": scratch.config_hash(),
        "arinit_config_sha256": arinit.config_hash(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return CompareResult(res_s, res_a, summary)


def arinit_pair(base: RunConfig, ar_checkpoint) -> tuple[RunConfig, RunConfig]:
    """Matched (scratch, AR-init) diffusion configs built from ``base``."""
    mode = base.mode if base.mode != "ar_pretrain" else "diffusion_pretrain"
    d = base.to_dict()
    d.update(mode=mode, init_checkpoint=None)
    scratch = RunConfig.from_dict(d)
    return scratch, replace(scratch, init_checkpoint=str(ar_checkpoint))
