"""Planning-task evaluation: decode held-out prompts and score them with the verifier."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ddlm.errors import CheckpointError, UsageError
from ddlm.harness.checkpoint import load_checkpoint
from ddlm.model import ModelParams, TransformerConfig, validate_params
from ddlm.numerics import RandomStream
from ddlm.sampler import DecodeConfig, GenerationTemplate, decode
from ddlm.tasks import get_task, read_jsonl
from ddlm.tasks.tokenizer import Tokenizer

# ``responder(record, index) -> text`` replaces the model, for harness self-tests
Responder = Callable[[dict, int], str]


@dataclass
class LoadedModel:
    params: ModelParams
    config: TransformerConfig
    snapshot: dict

    @property
    def seq_len(self) -> int:
        return int(self.snapshot.get("seq_len", self.config.max_seq_len))

    @property
    def config_hash(self) -> str | None:
        return self.snapshot.get("config_sha256")


@dataclass
class EvalReport:
    task: str
    n_instances: int
    solved: int
    forward_passes: int
    generated_tokens: int
    wallclock_s: float
    decode_config: DecodeConfig | None
    config_sha256: str | None = None
    passes_per_instance: list[int] = field(default_factory=list)
    results: list[dict] = field(default_factory=list)

    @property
    def solve_rate(self) -> float:
        return self.solved / self.n_instances if self.n_instances else 0.0

    @property
    def tokens_per_s(self) -> float:
        return self.generated_tokens / self.wallclock_s if self.wallclock_s > 0 else float("inf")

    def summary(self) -> dict:
        return {
            "task": self.task,
            "n_instances": self.n_instances,
            "solved": self.solved,
            "solve_rate": self.solve_rate,
            "forward_passes": self.forward_passes,
            "generated_tokens": self.generated_tokens,
            "wallclock_s": self.wallclock_s,
            "tokens_per_s": self.tokens_per_s,
            "config_sha256": self.config_sha256,
        }


def load_model(checkpoint, expected_config_hash: str | None = None) -> LoadedModel:
    """Load a checkpoint and check it against its own snapshot (and an expected run hash)."""
    params, snap = load_checkpoint(checkpoint)
    if "model" not in snap:
        raise CheckpointError(f"{checkpoint}: snapshot has no model config")
    config = TransformerConfig.from_dict(snap["model"])
    try:
        validate_params(params, config)
    except UsageError as exc:
        raise CheckpointError(f"{checkpoint}: parameters do not match the stored model config: {exc}") from None
    if expected_config_hash is not None and snap.get("config_sha256") != expected_config_hash:
        raise CheckpointError(
            f"{checkpoint}: config hash {snap.get('config_sha256')} does not match expected {expected_config_hash}"
        )
    return LoadedModel(params, config, snap)


def instance_seed(seed: int, index: int) -> int:
    """Decode seed for instance ``index``, independent of evaluation order."""
    return int(RandomStream(seed).fork("instance", index).integers(0, 2**63 - 1))


def response_template(tokenizer: Tokenizer, prompt: str, seq_len: int) -> GenerationTemplate:
    """``[BOS] + prompt`` fixed, every remaining slot up to ``seq_len`` masked."""
    prompt_ids = tokenizer.encode(prompt)
    free = seq_len - 1 - len(prompt_ids)
    if free < 1:
        raise UsageError(f"prompt of {len(prompt_ids)} tokens leaves no response slot in seq_len={seq_len}")
    tokens = np.array([tokenizer.bos_id] + prompt_ids + [tokenizer.mask_id] * free)
    fixed = np.arange(seq_len) < 1 + len(prompt_ids)
    return GenerationTemplate(tokens, fixed)


def random_responder(task: str, seed: int = 0) -> Responder:
    """Random strings over the task's response alphabet, length uniform in 1..slot."""
    spec = get_task(task)
    alphabet = np.array(list(spec.response_alphabet))
    root = RandomStream(seed).fork("random-response")

    def respond(record: dict, index: int) -> str:
        rng = root.fork(index)
        n = int(rng.integers(1, spec.response_slot + 1))
        return "".join(alphabet[rng.integers(0, alphabet.size, size=n)])

    return respond


def oracle_responder(record: dict, index: int) -> str:
    return record["response"]


def evaluate(
    checkpoint,
    task: str,
    decode_config: DecodeConfig,
    n_instances: int,
    heldout_path,
    *,
    responder: Responder | None = None,
    expected_config_hash: str | None = None,
    keep_results: bool = False,
    model: LoadedModel | None = None,
) -> EvalReport:
    """Solve rate and decoding cost over the first ``n_instances`` held-out records.

    With ``responder`` set, no model is loaded and its text is scored instead.
    """
    spec = get_task(task)
    records = read_jsonl(heldout_path)[:n_instances]
    if len(records) < n_instances:
        raise UsageError(f"{heldout_path} has {len(records)} records, fewer than n_instances={n_instances}")
    tokenizer = Tokenizer()
    chash = None
    if responder is None:
        model = model or load_model(checkpoint, expected_config_hash)
        chash = model.config_hash
        snap_task = model.snapshot.get("task")
        if snap_task is not None and snap_task != task:
            raise CheckpointError(f"checkpoint was trained on task {snap_task!r}, not {task!r}")

    solved = passes = generated = 0
    per_instance: list[int] = []
    results: list[dict] = []
    start = time.perf_counter()
    for i, record in enumerate(records):
        if responder is not None:
            answer, n_pass = responder(record, i), 0
            generated += len(answer)
        else:
            template = response_template(tokenizer, record["prompt"], model.seq_len)
            cfg = replace(decode_config, seed=instance_seed(decode_config.seed, i))
            out = decode(model.params, model.config, template, cfg)
            n_pass = out.forward_passes
            generated += int(template.free_positions.size)
            answer = tokenizer.decode(out.tokens[~template.fixed_flags], stop_at_eos=True)
        ok = spec.verify_record(record, answer)
        solved += ok
        passes += n_pass
        per_instance.append(n_pass)
        if keep_results:
            results.append({"prompt": record["prompt"], "reference": record["response"], "answer": answer, "correct": ok})
    wall = time.perf_counter() - start
    return EvalReport(
        task=task,
        n_instances=len(records),
        solved=int(solved),
        forward_passes=passes,
        generated_tokens=generated,
        wallclock_s=wall,
        decode_config=None if responder is not None else decode_config,
        config_sha256=chash,
        passes_per_instance=per_instance,
        results=results,
    )


def random_response_baseline(task: str, heldout_path, n_instances: int, draws: int = 50, seed: int = 0) -> dict:
    """Solve rate of random responses: ``draws`` independent guesses per instance.

    Also reports the rule-of-three upper bound ``3 / trials``, which stands in
    when no random guess succeeds.
    """
    spec = get_task(task)
    records = read_jsonl(heldout_path)[:n_instances]
    respond = random_responder(task, seed)
    solved = trials = 0
    for d in range(draws):
        for i, record in enumerate(records):
            solved += spec.verify_record(record, respond(record, d * len(records) + i))
            trials += 1
    rate = solved / trials if trials else 0.0
    return {"trials": trials, "solved": solved, "rate": rate, "upper_bound": max(rate, 3.0 / trials) if trials else 1.0}
