"""Append-only CSV metrics with an embedded config hash."""

from __future__ import annotations

import csv
from pathlib import Path

BASE_COLUMNS = ("step", "loss", "tokens_seen", "lr")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsLog:
    def __init__(self, path, extra_columns=(), config_hash: str | None = None):
        self.path = Path(path)
        self.columns = tuple(BASE_COLUMNS) + tuple(extra_columns)
        self.config_hash = config_hash
        self._last_step = None
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", encoding="utf-8", newline="") as fh:
            if config_hash:
                fh.write(f"# config_sha256={config_hash}\n")
            fh.write(",".join(self.columns) + "\n")

    def append(self, **row):
        step = int(row["step"])
        if self._last_step is not None and step <= self._last_step:
            raise ValueError(f"metrics step {step} does not increase past {self._last_step}")
        self._last_step = step
        missing = set(self.columns) - set(row)
        if missing:
            raise ValueError(f"metrics row missing columns {sorted(missing)}")
        with self.path.open("a", encoding="utf-8", newline="") as fh:
            fh.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")


def read_metrics(path) -> tuple[list[dict], str | None]:
    """Rows as dicts of floats (``step`` and ``tokens_seen`` as ints) plus the config hash."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    config_hash = None
    body = []
    for line in lines:
        if line.startswith("#"):
            if "config_sha256=" in line:
                config_hash = line.split("=", 1)[1].strip()
            continue
        body.append(line)
    rows = []
    for rec in csv.DictReader(body):
        row = {}
        for k, v in rec.items():
            if v == "":
                row[k] = None
            elif k in ("step", "tokens_seen"):
                row[k] = int(v)
            else:
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
        rows.append(row)
    return rows, config_hash
