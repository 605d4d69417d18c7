"""Synthetic planning tasks with exact verifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ddlm.tasks.countdown import CountdownInstance, gen_countdown, verify_countdown
from ddlm.tasks.dataset import emit_dataset, encode_pair, pack, read_jsonl, required_seq_len
from ddlm.tasks.sudoku import SudokuInstance, gen_sudoku, verify_sudoku
from ddlm.tasks.tokenizer import Tokenizer


@dataclass(frozen=True)
class TaskSpec:
    name: str
    instance_cls: type
    verify: Callable
    response_slot: int
    response_alphabet: str

    def instance(self, record: dict):
        return self.instance_cls.from_prompt(record["prompt"], record.get("response", ""))

    def verify_record(self, record: dict, answer: str) -> bool:
        return bool(self.verify(self.instance(record), answer))


TASKS = {
    "countdown": TaskSpec("countdown", CountdownInstance, verify_countdown, 16, "0123456789+-*/()"),
    "sudoku": TaskSpec("sudoku", SudokuInstance, verify_sudoku, 19, "1234/"),
}


def generate_instances(task: str, n: int, seed: int, *, n_numbers: int = 3, value_max: int = 20, clue_count: int = 8) -> list:
    """``n`` instances, instance ``i`` drawn from its own forked stream."""
    from ddlm.numerics import RandomStream

    root = RandomStream(seed).fork("gen", task)
    if task == "countdown":
        return [gen_countdown(root.fork(i), n_numbers=n_numbers, value_max=value_max) for i in range(n)]
    if task == "sudoku":
        return [gen_sudoku(root.fork(i), clue_count=clue_count) for i in range(n)]
    raise ValueError(f"unknown task {task!r}; choose from {sorted(TASKS)}")


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None


__all__ = [
    "TASKS",
    "CountdownInstance",
    "SudokuInstance",
    "TaskSpec",
    "Tokenizer",
    "emit_dataset",
    "encode_pair",
    "gen_countdown",
    "gen_sudoku",
    "generate_instances",
    "get_task",
    "pack",
    "read_jsonl",
    "required_seq_len",
    "verify_countdown",
    "verify_sudoku",
]
