"""JSONL prompt/response datasets and fixed-length sequence packing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ddlm.errors import CapacityError, DataError
from ddlm.numerics import RandomStream
from ddlm.tasks.tokenizer import Tokenizer


def emit_dataset(instances, split_ratios, paths, seed: int = 0) -> list[int]:
    """Shuffle, de-duplicate by instance key, split and write one JSONL per split.

    Returns the number of records written per split.
    """
    ratios = [float(r) for r in split_ratios]
    paths = [Path(p) for p in paths]
    if len(ratios) != len(paths):
        raise ValueError("need one path per split ratio")
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    unique, seen = [], set()
    for inst in instances:
        if inst.key not in seen:
            seen.add(inst.key)
            unique.append(inst)
    order = RandomStream(seed).fork("dataset-split").permutation(len(unique))
    shuffled = [unique[i] for i in order]
    bounds = [0] + [int(round(c * len(shuffled))) for c in np.cumsum(ratios)]
    bounds[-1] = len(shuffled)
    counts = []
    for path, lo, hi in zip(paths, bounds[:-1], bounds[1:]):
        write_jsonl(path, ({"prompt": x.prompt_text, "response": x.response_text} for x in shuffled[lo:hi]))
        counts.append(hi - lo)
    return counts


def write_jsonl(path, records):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing dataset {path}: {exc}") from exc


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"failed reading dataset {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if "prompt" not in rec or "response" not in rec:
            raise DataError(f"{path}:{lineno}: record needs 'prompt' and 'response'")
        records.append(rec)
    return records


@dataclass
class PackedData:
    """Fixed-length token matrix for a list of prompt/response records."""

    tokens: np.ndarray  # [N, L]
    prompt_lengths: np.ndarray  # [N], excluding BOS
    records: list[dict]

    @property
    def seq_len(self) -> int:
        return self.tokens.shape[1]

    def __len__(self):
        return self.tokens.shape[0]


def required_seq_len(records, tokenizer: Tokenizer, response_slot: int) -> int:
    longest = 0
    for rec in records:
        n_resp = len(tokenizer.encode(rec["response"]))
        if n_resp > response_slot:
            raise CapacityError(f"response {rec['response']!r} longer than the {response_slot}-token slot")
        longest = max(longest, len(tokenizer.encode(rec["prompt"])))
    return 1 + longest + response_slot


def encode_pair(tokenizer: Tokenizer, prompt: str, response: str, seq_len: int) -> tuple[list[int], int]:
    """``[BOS] + prompt + response`` right-filled with EOS to ``seq_len``."""
    p = tokenizer.encode(prompt)
    r = tokenizer.encode(response)
    room = seq_len - 1 - len(p)
    if len(r) > room:
        raise CapacityError(f"prompt+response needs {1 + len(p) + len(r)} tokens, seq_len is {seq_len}")
    return [tokenizer.bos_id] + p + r + [tokenizer.eos_id] * (room - len(r)), len(p)


def pack(records, tokenizer: Tokenizer, seq_len: int) -> PackedData:
    rows, plens = [], []
    for rec in records:
        ids, plen = encode_pair(tokenizer, rec["prompt"], rec["response"], seq_len)
        rows.append(ids)
        plens.append(plen)
    tokens = np.array(rows, dtype=np.int64).reshape(len(rows), seq_len)
    return PackedData(tokens, np.array(plens, dtype=np.int64), list(records))
