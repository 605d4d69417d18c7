"""``ddlm`` command line: gen-data, train, eval, sweep, compare-init, sample, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import MISSING, fields
from pathlib import Path

from ddlm.errors import DDLMError
from ddlm.harness.config import RunConfig, load_config
from ddlm.tasks import emit_dataset, generate_instances, get_task, read_jsonl

MODEL_FLAGS = ("d_model", "n_heads", "n_layers", "d_ff", "max_seq_len")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run config; flags override it")
    for f in fields(RunConfig):
        if f.name == "model":
            continue
        default = f.default if f.default is not MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(default, tuple):
            p.add_argument(flag, dest=f.name, type=float, nargs=len(default), default=None)
        elif isinstance(default, (int, float)):
            p.add_argument(flag, dest=f.name, type=type(default), default=None)
        else:
            p.add_argument(flag, dest=f.name, default=None)
    for name in MODEL_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest="model_" + name, type=int, default=None)


def _run_config(args) -> RunConfig:
    overrides = {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if f.name != "model" and v is not None:
            overrides[f.name] = tuple(v) if isinstance(v, list) else v
    model = {n: getattr(args, "model_" + n) for n in MODEL_FLAGS if getattr(args, "model_" + n) is not None}
    if model:
        overrides["model"] = model
    return load_config(args.config, overrides)


def _add_decode_flags(p: argparse.ArgumentParser, steps_default: int | None = 16):
    from ddlm.sampler import STRATEGIES

    if steps_default is not None:
        p.add_argument("--steps", type=int, default=steps_default, help="decoding steps K")
    p.add_argument("--strategy", choices=STRATEGIES, default="max_confidence")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)


def cmd_gen_data(args) -> int:
    split = _float_list(args.split)
    if abs(sum(split) - 1.0) > 1e-9:
        raise SystemExit(f"--split ratios must sum to 1, got {split}")
    names = ["train", "heldout", "test"][: len(split)]
    out = Path(args.out_dir)
    paths = [out / f"{args.task}_{n}.jsonl" for n in names]
    instances = generate_instances(
        args.task, args.n, args.seed, n_numbers=args.n_numbers, value_max=args.value_max, clue_count=args.clue_count
    )
    counts = emit_dataset(instances, split, paths, seed=args.seed)
    print("split,path,records")
    for n, p, c in zip(names, paths, counts):
        print(f"{n},{p},{c}")
    return 0


def cmd_train(args) -> int:
    from ddlm.harness.train import train

    config = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    res = train(config, out)
    print(
        json.dumps(
            {
                "final_checkpoint": str(res.final_checkpoint),
                "best_checkpoint": str(res.best_checkpoint),
                "metrics": str(res.metrics_path),
                "initial_heldout_loss": res.initial_heldout,
                "best_heldout_loss": res.best_heldout,
                "config_sha256": config.config_hash(),
            },
            indent=2,
        )
    )
    return 0


def cmd_eval(args) -> int:
    from ddlm.harness.evaluate import evaluate, oracle_responder, random_responder
    from ddlm.sampler import DecodeConfig

    expected = None
    if args.config:
        expected = load_config(args.config).config_hash()
    responder = None
    if args.responses == "oracle":
        responder = oracle_responder
    elif args.responses == "random":
        responder = random_responder(args.task, args.seed)
    cfg = DecodeConfig(steps=args.steps, strategy=args.strategy, temperature=args.temperature, seed=args.seed)
    rep = evaluate(
        args.checkpoint,
        args.task,
        cfg,
        args.n,
        args.heldout,
        responder=responder,
        expected_config_hash=expected,
        keep_results=bool(args.results),
    )
    if args.results:
        with open(args.results, "w", encoding="utf-8") as fh:
            for r in rep.results:
                fh.write(json.dumps(r) + "\n")
    print(json.dumps(rep.summary(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    from ddlm.harness.evaluate import random_response_baseline
    from ddlm.harness.experiments import SWEEP_COLUMNS, sweep_quality_speed
    from ddlm.harness.plotting import plot_quality_speed

    out = Path(args.out)
    rows = sweep_quality_speed(
        args.checkpoint,
        args.task,
        _int_list(args.steps_list),
        _int_list(args.seeds),
        args.heldout,
        out,
        n_instances=args.n,
        strategy=args.strategy,
        temperature=args.temperature,
    )
    baseline = random_response_baseline(args.task, args.heldout, args.n)
    png = plot_quality_speed(rows, out.with_suffix(".png"), baseline=baseline["rate"])
    print(",".join(SWEEP_COLUMNS))
    for r in rows:
        print(",".join(str(r[c]) for c in SWEEP_COLUMNS))
    print(f"# random_baseline_rate={baseline['rate']} upper_bound={baseline['upper_bound']} trials={baseline['trials']}")
    print(f"# figure={png}")
    return 0


def cmd_compare_init(args) -> int:
    from ddlm.harness.experiments import arinit_pair, compare_init
    from ddlm.harness.plotting import plot_compare_init

    base = _run_config(args)
    scratch, arinit = arinit_pair(base, args.ar_checkpoint)
    out = Path(args.out_dir)
    res = compare_init(scratch, arinit, out)
    png = plot_compare_init(
        res.scratch.metrics_path, res.arinit.metrics_path, out / "compare_init.png", warmup_step=res.summary["heldout"]["warmup_cutoff"]
    )
    print("column,points,arinit_le_scratch,fraction")
    for key in ("heldout", "train"):
        s = res.summary[key]
        print(f"{s['column']},{s['points']},{s['arinit_le_scratch']},{s['fraction']}")
    print(f"# scratch={res.scratch.metrics_path} arinit={res.arinit.metrics_path}")
    print(f"# figure={png}")
    return 0


def cmd_sample(args) -> int:
    from ddlm.harness.evaluate import load_model
    from ddlm.sampler import DecodeConfig, build_template, decode, write_trace
    from ddlm.tasks.tokenizer import Tokenizer

    model = load_model(args.checkpoint)
    tok = Tokenizer()
    slots = args.slot or []
    segments = args.segment
    if segments is not None and len(segments) == len(slots):
        segments = [""] + segments
    template = build_template(tok, args.prefix, slots, segments, max_seq_len=model.config.max_seq_len)
    steps = args.steps if args.steps is not None else max(1, int(template.free_positions.size))
    cfg = DecodeConfig(steps=steps, strategy=args.strategy, temperature=args.temperature, seed=args.seed)
    result = decode(model.params, model.config, template, cfg)
    if args.trace:
        write_trace(result.trace, args.trace)
    print(tok.decode(result.tokens[1:]))
    return 0


def cmd_verify(args) -> int:
    task = get_task(args.task)
    if args.file:
        records = read_jsonl(args.file)
    else:
        if args.prompt is None or args.answer is None:
            raise SystemExit("verify needs --file or both --prompt and --answer")
        records = [{"prompt": args.prompt, "answer": args.answer}]
    solved = 0
    print("index,correct")
    for i, r in enumerate(records):
        answer = r.get("answer", r.get("response", ""))
        ok = task.verify_record({"prompt": r["prompt"]}, answer)
        solved += ok
        print(f"{i},{str(ok).lower()}")
    print(f"# solved={solved}/{len(records)}")
    return 0 if solved == len(records) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddlm", description="Masked discrete diffusion LM laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a task corpus and split it into JSONL files")
    p.add_argument("--task", choices=["countdown", "sudoku"], default="countdown")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="0.9,0.1")
    p.add_argument("--out-dir", default="data")
    p.add_argument("--n-numbers", type=int, default=3)
    p.add_argument("--value-max", type=int, default=20)
    p.add_argument("--clue-count", type=int, default=8)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model (ar_pretrain, diffusion_pretrain or sft)")
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="solve rate of a checkpoint on held-out instances")
    p.add_argument("--checkpoint")
    p.add_argument("--task", default="countdown")
    p.add_argument("--heldout", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--config", help="run config the checkpoint must match")
    p.add_argument("--responses", choices=["model", "oracle", "random"], default="model")
    p.add_argument("--results", help="write per-instance JSONL here")
    _add_decode_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="solve rate vs decoding steps K")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", default="countdown")
    p.add_argument("--heldout", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--steps-list", default="1,2,4,8,16")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", default="sweep.csv")
    _add_decode_flags(p, steps_default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-init", help="AR-initialized vs from-scratch diffusion training")
    _add_run_flags(p)
    p.add_argument("--ar-checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare_init)

    p = sub.add_parser("sample", help="completion or infilling from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prefix", default="")
    p.add_argument("--slot", type=int, action="append", help="masked slot length (repeatable)")
    p.add_argument(
        "--segment",
        action="append",
        help="fixed text after each slot (repeatable); give one more than --slot to also insert text before the first slot",
    )
    p.add_argument("--trace", help="write per-step JSONL records here")
    p.add_argument("--steps", type=int, default=None, help="decoding steps K (default: one per masked position)")
    _add_decode_flags(p, steps_default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify", help="score answers with the task verifier")
    p.add_argument("--task", default="countdown")
    p.add_argument("--prompt")
    p.add_argument("--answer")
    p.add_argument("--file", help="JSONL with prompt and answer (or response) fields")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DDLMError, OSError, ValueError) as exc:
        print(f"ddlm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
