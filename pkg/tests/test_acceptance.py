"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line; the session summary
collects them. Criteria 5-7 share one trained Countdown-3 pipeline
(AR pretraining, AR-init diffusion comparison, SFT), which takes roughly
half an hour on one CPU core.
"""

import ast
import filecmp
import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import qmc

from ddlm.diffusion import CartConfig, NoiseSchedule, cart_weights, diffusion_loss, mask_from_uniforms, mask_sequence
from ddlm.harness.checkpoint import load_checkpoint, save_checkpoint
from ddlm.harness.config import RunConfig, default_model_config
from ddlm.harness.evaluate import load_model, random_response_baseline
from ddlm.harness.experiments import arinit_pair, compare_init, sweep_quality_speed
from ddlm.harness.train import load_data, train
from ddlm.model import TransformerConfig, ar_loss, forward, init_params
from ddlm.numerics import (
    RandomStream,
    Tensor,
    add,
    embedding,
    grad_check,
    masked_cross_entropy,
    matmul,
    mul,
    parameter,
    reshape,
    rmsnorm,
    rope,
    silu,
    slice_axis1,
    softmax_lastdim,
    transpose,
    tsum,
)
from ddlm.sampler import DecodeConfig, build_template, decode
from ddlm.tasks import emit_dataset, generate_instances, get_task
from ddlm.tasks.countdown import solve_countdown, verify_countdown
from ddlm.tasks.sudoku import solve_sudoku, verify_sudoku
from ddlm.tasks.tokenizer import Tokenizer

TOK = Tokenizer()
PIPELINE_LR = 3e-3
AR_STEPS = 4000
SFT_STEPS = 20_000
COMPARE_STEPS = 5000
SWEEP_KS = (1, 2, 4, 8, 16)
SWEEP_SEEDS = (0, 1, 2)
SWEEP_INSTANCES = 200
BASELINE_DRAWS = 500


# -- shared trained pipeline -------------------------------------------------


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("acc_corpus")
    paths = [d / "countdown_train.jsonl", d / "countdown_heldout.jsonl"]
    emit_dataset(generate_instances("countdown", 20_000, seed=0), (0.9, 0.1), paths, seed=0)
    return paths


def pipeline_config(corpus, **kw) -> RunConfig:
    base = dict(
        model=default_model_config(),
        task="countdown",
        train_path=str(corpus[0]),
        heldout_path=str(corpus[1]),
        lr=PIPELINE_LR,
        warmup_steps=100,
        log_interval=500,
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def ar_run(corpus, tmp_path_factory):
    return train(pipeline_config(corpus, mode="ar_pretrain", total_steps=AR_STEPS), tmp_path_factory.mktemp("acc_ar"))


@pytest.fixture(scope="module")
def sft_run(corpus, ar_run, tmp_path_factory):
    cfg = pipeline_config(corpus, mode="sft", total_steps=SFT_STEPS, warmup_steps=200, init_checkpoint=str(ar_run.final_checkpoint))
    return train(cfg, tmp_path_factory.mktemp("acc_sft"))


# -- 1: gradient soundness -------------------------------------------------------


def primitive_checks(rng: np.random.Generator, dtype):
    """(name, loss builder, params) triples exercising every differentiable primitive."""

    def p(*shape, scale=1.0):
        return parameter((rng.normal(size=shape) * scale).astype(dtype))

    b, n, d = 2, int(rng.integers(3, 6)), 4
    w3 = rng.normal(size=(b, n, d))
    ids = rng.integers(0, 6, size=(b, n))
    targets = rng.integers(0, 6, size=b * n)
    weights = rng.random(b * n) * (rng.random(b * n) < 0.7)
    weights[0] = 1.0
    ang = rng.random((n, d // 2)) * 6
    cos, sin = np.cos(np.concatenate([ang, ang], -1)), np.sin(np.concatenate([ang, ang], -1))
    return [
        ("add", lambda q: tsum(mul(add(q["a"], q["b"]), w3)), {"a": p(b, n, d), "b": p(d)}),
        ("mul", lambda q: tsum(mul(mul(q["a"], q["b"]), w3)), {"a": p(b, n, d), "b": p(n, 1)}),
        ("matmul", lambda q: tsum(mul(matmul(q["a"], q["b"]), w3)), {"a": p(b, n, 3), "b": p(3, d)}),
        ("reshape+transpose", lambda q: tsum(mul(transpose(reshape(q["a"], (b, d, n)), (0, 2, 1)), w3)), {"a": p(b, n, d)}),
        ("slice", lambda q: tsum(mul(slice_axis1(q["a"], 1, n), w3[:, 1:])), {"a": p(b, n, d)}),
        ("softmax", lambda q: tsum(mul(softmax_lastdim(q["a"]), w3)), {"a": p(b, n, d, scale=2.0)}),
        ("silu", lambda q: tsum(mul(silu(q["a"]), w3)), {"a": p(b, n, d, scale=2.0)}),
        ("rmsnorm", lambda q: tsum(mul(rmsnorm(q["a"], q["g"]), w3)), {"a": p(b, n, d), "g": p(d)}),
        ("embedding", lambda q: tsum(mul(embedding(q["t"], ids), w3)), {"t": p(6, d)}),
        ("rope", lambda q: tsum(mul(rope(q["a"], cos, sin), w3)), {"a": p(b, n, d)}),
        ("masked_ce", lambda q: masked_cross_entropy(q["a"], targets, weights), {"a": p(b * n, 6, scale=2.0)}),
    ]


def model_checks(rng: np.random.Generator, seed: int, dtype):
    """Full 2-layer model losses on a toy configuration."""
    vocab = int(rng.integers(6, 9))
    length = int(rng.integers(3, 6))
    causal = TransformerConfig(vocab_size=vocab, d_model=4, n_heads=2, n_layers=2, d_ff=4, max_seq_len=8)
    full = TransformerConfig(**{**causal.to_dict(), "attention_mode": "full"})
    x = rng.integers(4, vocab, size=(2, length))
    x[:, 0] = causal.bos_id
    batch = mask_sequence(x, rng.uniform(0.3, 1.0, size=2), x == causal.bos_id, RandomStream(seed))
    params = init_params(causal, seed, dtype=dtype)
    return [
        ("ar_loss", lambda q: ar_loss(q, causal, x), params),
        ("diffusion_loss", lambda q: diffusion_loss(forward(q, full, batch.xt), batch, NoiseSchedule()), params),
        ("diffusion_loss+cart", lambda q: diffusion_loss(forward(q, full, batch.xt), batch, NoiseSchedule(), CartConfig()), params),
    ]


def test_criterion_1_gradient_soundness(criterion):
    start = time.perf_counter()
    worst = {np.float32: (0.0, ""), np.float64: (0.0, "")}
    for cfg in range(20):
        for dtype in (np.float32, np.float64):
            rng = np.random.default_rng([cfg, np.dtype(dtype).itemsize])
            for name, f, params in primitive_checks(rng, dtype) + model_checks(rng, cfg, dtype):
                err = grad_check(f, params)
                if err > worst[dtype][0]:
                    worst[dtype] = (err, f"{name}@cfg{cfg}")
    elapsed = time.perf_counter() - start
    ok = worst[np.float32][0] < 1e-3 and worst[np.float64][0] < 1e-5 and elapsed < 120
    criterion(
        1,
        ok,
        f"max rel err fp32={worst[np.float32][0]:.2e} ({worst[np.float32][1]}) < 1e-3, "
        f"fp64={worst[np.float64][0]:.2e} ({worst[np.float64][1]}) < 1e-5, runtime {elapsed:.0f}s < 120s",
    )
    assert ok


# -- 2: diffusion-loss identity ----------------------------------------------------


def test_criterion_2_loss_identity(criterion):
    """E over (t, mask) of the weighted loss equals the fully-masked cross-entropy.

    With t ~ U(0, 1] the estimand 1{masked}/t has infinite variance, so no
    sample of any size reliably lands within 2%. The draws instead use a
    scrambled Sobol point set with t = z**2 and importance weight
    2z = p(t)/q(t): the estimator stays unbiased and becomes square-integrable.
    The masks still come from ``mask_from_uniforms`` and the weights from
    ``diffusion_loss``.
    """
    start = time.perf_counter()
    c = TransformerConfig(vocab_size=TOK.vocab_size, d_model=16, n_heads=2, n_layers=2, d_ff=24, max_seq_len=8, attention_mode="full")
    params = init_params(c, 7, dtype=np.float64)
    # sharpen the output so the target CE is far from the uniform value
    params["lm_head"].data = params["lm_head"].data * 40
    token = TOK.encode("7")[0]
    x0 = np.array([c.bos_id, token])
    masked_logits = forward(params, c, np.array([[c.bos_id, c.mask_id]])).data[0, 0]
    direct_ce = float(np.logaddexp.reduce(masked_logits) - masked_logits[token])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = qmc.Sobol(2, scramble=True, seed=0).random_base2(14)
    t = np.maximum(z[:, 0], np.finfo(float).tiny) ** 2
    u = np.stack([np.zeros(len(z)), z[:, 1]], axis=1)
    n = len(z)
    batch = mask_from_uniforms(np.tile(x0, (n, 1)), t, np.tile([True, False], (n, 1)), u, c.mask_id)
    cache = {}
    total = 0.0
    for i in range(n):
        key = bool(batch.mask_flags[i, 1])
        if key not in cache:
            cache[key] = forward(params, c, batch.xt[i : i + 1]).data
        row = type(batch)(batch.x0[i : i + 1], batch.xt[i : i + 1], batch.t[i : i + 1], batch.mask_flags[i : i + 1], batch.protected_flags[i : i + 1], c.mask_id)
        loss = float(diffusion_loss(Tensor(cache[key]), row, NoiseSchedule()).data) * x0.size
        total += loss * 2.0 * math.sqrt(t[i])
    estimate = total / n
    rel = abs(estimate - direct_ce) / direct_ce
    elapsed = time.perf_counter() - start
    ok = rel < 0.02 and elapsed < 60
    criterion(2, ok, f"MC mean {estimate:.4f} vs direct CE {direct_ce:.4f}: rel diff {rel:.2%} < 2% over {n} draws, runtime {elapsed:.1f}s")
    assert ok


# -- 3: CART properties --------------------------------------------------------------


def test_criterion_3_cart_properties(criterion):
    """Random cases use L <= 16 and p <= 0.9 so each added clean token shifts w
    by at least 0.45 * 0.1**14, well above float64 resolution near 1."""
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    failures = {"range": 0, "add_clean": 0, "distance": 0, "all_masked": 0}
    m = TOK.mask_id
    for _ in range(10_000):
        length = int(rng.integers(2, 17))
        p = float(rng.uniform(0.05, 0.9))
        cart = CartConfig(p=p)
        xt = rng.integers(4, TOK.vocab_size, size=length)
        masked = rng.random(length) < rng.uniform(0.2, 0.9)
        masked[rng.integers(length)] = True
        xt[masked] = m
        w = cart_weights(xt, np.zeros(length, bool), cart, m)[0]
        if np.any(w < 0) or np.any(w > 1):
            failures["range"] += 1
        still = np.flatnonzero(masked)
        if still.size >= 2:
            j = int(rng.choice(still))
            xt2 = xt.copy()
            xt2[j] = 4
            w2 = cart_weights(xt2, np.zeros(length, bool), cart, m)[0]
            others = still[still != j]
            if not np.all(w2[others] > w[others]):
                failures["add_clean"] += 1
        n = int(rng.integers(length))
        ws = []
        for d in range(1, length):
            for pos in (n - d, n + d):
                if 0 <= pos < length:
                    single = np.full(length, m)
                    single[pos] = 4
                    ws.append((d, cart_weights(single, np.zeros(length, bool), cart, m)[0, n]))
        by_d = [w for _, w in sorted(ws)]
        if any(b > a for a, b in zip(by_d, by_d[1:])):
            failures["distance"] += 1
        if np.any(cart_weights(np.full(length, m), np.zeros(length, bool), cart, m) != 0):
            failures["all_masked"] += 1
    elapsed = time.perf_counter() - start
    ok = not any(failures.values()) and elapsed < 60
    criterion(3, ok, f"violations over 10000 cases {failures}, runtime {elapsed:.1f}s")
    assert ok


# -- 4: forward-process statistics ----------------------------------------------------


def test_criterion_4_masking_statistics(criterion):
    x0 = np.full((100, 100), 10)
    free = np.zeros_like(x0, dtype=bool)
    details, ok = [], True
    for t in (0.1, 0.3, 0.7):
        frac = mask_sequence(x0, t, free, RandomStream(4).fork("t", str(t))).mask_flags.mean()
        sd = math.sqrt(t * (1 - t) / x0.size)
        ok &= abs(frac - t) <= 3 * sd
        details.append(f"t={t}: {frac:.4f} ({abs(frac - t) / sd:.2f} sd)")
    none = mask_sequence(x0, 0.0, free, RandomStream(5)).mask_flags.sum()
    every = mask_sequence(x0, 1.0, free, RandomStream(6)).mask_flags.sum()
    ok &= none == 0 and every == x0.size
    details.append(f"t=0 masked {none}, t=1 masked {every}/{x0.size}")
    criterion(4, ok, "; ".join(details))
    assert ok


# -- 5: sampler oracle equivalence and constraint preservation ------------------------


def sequential_greedy(params, config, tokens, fixed):
    """Fill masks left to right, one argmax per forward pass, never emitting MASK/BOS/PAD."""
    cur = tokens.copy()
    for n in np.flatnonzero(~fixed):
        logits = forward(params, config, cur[None]).data[0, n - 1].astype(np.float64)
        logits[[config.mask_id, config.bos_id, config.pad_id]] = -np.inf
        cur[n] = int(np.argmax(logits))
    return cur


def random_template(rng, n_slots):
    chars = "0123456789+-*/(),>:="

    def text(lo, hi):
        return "".join(rng.choice(list(chars), size=int(rng.integers(lo, hi + 1))))

    slots = [int(rng.integers(1, 6)) for _ in range(n_slots)]
    segments = [""] + [text(1, 3) for _ in range(n_slots)]
    if rng.random() < 0.5:
        segments[-1] = ""
    return build_template(TOK, text(0, 8), slots, segments)


@pytest.mark.slow
def test_criterion_5_sampler_oracle(criterion, sft_run):
    m = load_model(sft_run.best_checkpoint)
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(100):
        tpl = random_template(rng, int(rng.integers(1, 3)))
        k = int((~tpl.fixed_flags).sum())
        out = decode(m.params, m.config, tpl, DecodeConfig(steps=k, strategy="left_to_right", temperature=0.0))
        mismatches += not np.array_equal(out.tokens, sequential_greedy(m.params, m.config, tpl.tokens, tpl.fixed_flags))
    broken = 0
    strategies = ("max_confidence", "min_entropy", "random_order", "left_to_right")
    for i in range(1000):
        tpl = random_template(rng, int(rng.integers(1, 4)))
        k = int(rng.integers(1, int((~tpl.fixed_flags).sum()) + 1))
        cfg = DecodeConfig(steps=k, strategy=strategies[i % 4], temperature=float(rng.choice([0.0, 0.7, 1.0])), seed=i)
        out = decode(m.params, m.config, tpl, cfg)
        broken += not np.array_equal(out.tokens[tpl.fixed_flags], tpl.tokens[tpl.fixed_flags]) or bool(np.any(out.tokens == m.config.mask_id))
    ok = mismatches == 0 and broken == 0
    criterion(5, ok, f"sequential-greedy mismatches {mismatches}/100; infilling decodes altering fixed tokens {broken}/1000")
    assert ok


# -- 6: AR initialization vs random initialization -------------------------------------


@pytest.mark.slow
def test_criterion_6_compare_init(criterion, corpus, ar_run, tmp_path_factory):
    start = time.perf_counter()
    base = pipeline_config(corpus, mode="diffusion_pretrain", total_steps=COMPARE_STEPS, log_interval=100)
    scratch, arinit = arinit_pair(base, ar_run.final_checkpoint)
    res = compare_init(scratch, arinit, tmp_path_factory.mktemp("acc_compare"), data=load_data(scratch))
    s = res.summary["heldout"]
    elapsed = time.perf_counter() - start
    ok = s["fraction"] >= 0.9 and elapsed <= 3600
    criterion(
        6,
        ok,
        f"AR-init <= scratch held-out loss at {s['arinit_le_scratch']}/{s['points']} post-warmup points "
        f"({s['fraction']:.1%} >= 90%), runtime {elapsed / 60:.1f} min",
    )
    assert ok


# -- 7: quality-speed trade-off --------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_quality_speed(criterion, corpus, sft_run, tmp_path):
    rows = sweep_quality_speed(
        sft_run.best_checkpoint, "countdown", SWEEP_KS, SWEEP_SEEDS, corpus[1], tmp_path / "sweep.csv", n_instances=SWEEP_INSTANCES
    )
    base = random_response_baseline("countdown", corpus[1], SWEEP_INSTANCES, draws=BASELINE_DRAWS)
    baseline = base["upper_bound"]
    exact_k = all(r["passes"] == r["K"] * SWEEP_INSTANCES and r["passes_per_instance"] == r["K"] for r in rows)
    mean = {k: float(np.mean([r["solve_rate"] for r in rows if r["K"] == k])) for k in SWEEP_KS}
    above = all(r["solve_rate"] >= 20 * baseline for r in rows)
    ok = exact_k and mean[16] >= mean[1] and above
    curve = ", ".join(f"K{k}={mean[k]:.3f}" for k in SWEEP_KS)
    criterion(
        7,
        ok,
        f"passes exactly K: {exact_k}; mean solve {curve}; K16>=K1: {mean[16] >= mean[1]}; "
        f"min rate {min(r['solve_rate'] for r in rows):.3f} vs 20x baseline {20 * baseline:.4f} "
        f"(baseline {base['solved']}/{base['trials']})",
    )
    assert ok


# -- 8: planning-task oracles -------------------------------------------------------------


def independent_countdown(numbers, target, text) -> bool:
    """Second verifier built on Python's own parser, used to vet fuzz cases."""
    try:
        tree = ast.parse(text, mode="eval").body
    except SyntaxError:
        return False
    used = []

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            used.append(node.value)
            return Fraction(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in (ast.Add, ast.Sub, ast.Mult, ast.Div):
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Div):
                if b == 0:
                    raise ZeroDivisionError
                return a / b
            return {ast.Add: a + b, ast.Sub: a - b, ast.Mult: a * b}[type(node.op)]
        raise ValueError

    try:
        value = ev(tree)
    except (ValueError, ZeroDivisionError):
        return False
    pool = list(numbers)
    for n in used:
        if n not in pool:
            return False
        pool.remove(n)
    return value == target


def independent_sudoku(givens, text) -> bool:
    rows = text.split("/")
    if len(rows) != 4 or any(len(r) != 4 or not set(r) <= set("1234") for r in rows):
        return False
    g = [[int(ch) for ch in r] for r in rows]
    units = [set(r) for r in g] + [{g[r][c] for r in range(4)} for c in range(4)]
    units += [{g[r][c] for r in range(br, br + 2) for c in range(bc, bc + 2)} for br in (0, 2) for bc in (0, 2)]
    return all(u == {1, 2, 3, 4} for u in units) and all(not givens[r][c] or givens[r][c] == g[r][c] for r in range(4) for c in range(4))


def corrupt_countdown(inst, rng) -> str:
    s = inst.oracle_solution
    kind = int(rng.integers(4))
    if kind == 0:
        # swap in a number outside the pool
        digits = [i for i, ch in enumerate(s) if ch.isdigit() and (i == 0 or not s[i - 1].isdigit())]
        i = int(rng.choice(digits))
        j = i
        while j < len(s) and s[j].isdigit():
            j += 1
        bad = next(v for v in range(1, 200) if v not in inst.numbers and v != int(s[i:j]))
        return s[:i] + str(bad) + s[j:]
    if kind == 1:
        ops = [i for i, ch in enumerate(s) if ch in "+-*/"]
        i = int(rng.choice(ops))
        return s[:i] + str(rng.choice([o for o in "+-*/" if o != s[i]])) + s[i + 1 :]
    if kind == 2:
        a = int(rng.choice(inst.numbers))
        return f"{s}+{a}-{a}"
    return s[: int(rng.integers(1, len(s)))]


def corrupt_sudoku(inst, rng) -> str:
    g = [list(row) for row in inst.solution]
    free = [(r, c) for r in range(4) for c in range(4) if not inst.givens[r][c]]
    kind = int(rng.integers(4))
    if kind == 0 and free:
        r, c = free[int(rng.integers(len(free)))]
        g[r][c] = int(rng.choice([v for v in (1, 2, 3, 4) if v != g[r][c]]))
    elif kind == 1:
        r = int(rng.integers(4))
        a, b = rng.choice(4, size=2, replace=False)
        g[r][a], g[r][b] = g[r][b], g[r][a]
    elif kind == 2:
        given = [(r, c) for r in range(4) for c in range(4) if inst.givens[r][c]]
        r, c = given[int(rng.integers(len(given)))]
        g[r][c] = int(rng.choice([v for v in (1, 2, 3, 4) if v != g[r][c]]))
    else:
        text = "/".join("".join(map(str, row)) for row in g)
        i = int(rng.integers(len(text)))
        return text[:i] + text[i + 1 :]
    return "/".join("".join(map(str, row)) for row in g)


def test_criterion_8_task_oracles(criterion):
    cds = generate_instances("countdown", 500, seed=8)
    sds = generate_instances("sudoku", 500, seed=8)
    true_total = true_ok = 0
    for inst in cds:
        true_total += 1
        true_ok += verify_countdown(inst, inst.oracle_solution)
    for inst in cds[:50]:
        for sol in solve_countdown(inst.numbers, inst.target):
            true_total += 1
            true_ok += verify_countdown(inst, sol)
    for inst in sds:
        for text in [inst.response_text] + ["/".join("".join(map(str, row)) for row in g) for g in solve_sudoku(inst.givens, limit=2)]:
            true_total += 1
            true_ok += verify_sudoku(inst, text)

    rng = np.random.default_rng(8)
    fuzz_total = fuzz_rejected = 0
    for task, insts, corrupt, verify, indep in (
        ("countdown", cds, corrupt_countdown, verify_countdown, lambda i, s: independent_countdown(i.numbers, i.target, s)),
        ("sudoku", sds, corrupt_sudoku, verify_sudoku, lambda i, s: independent_sudoku(i.givens, s)),
    ):
        made = 0
        while made < 500:
            inst = insts[made % len(insts)]
            bad = corrupt(inst, rng)
            if indep(inst, bad):
                continue  # the corruption happened to stay correct
            made += 1
            fuzz_total += 1
            fuzz_rejected += not verify(inst, bad)
    ok = true_ok == true_total and fuzz_rejected == fuzz_total == 1000
    criterion(8, ok, f"oracle solutions verified {true_ok}/{true_total}; corrupted solutions rejected {fuzz_rejected}/{fuzz_total}")
    assert ok


# -- 9: determinism and persistence --------------------------------------------------------


def test_criterion_9_determinism(criterion, tmp_path):
    paths = [tmp_path / "train.jsonl", tmp_path / "heldout.jsonl"]
    emit_dataset(generate_instances("countdown", 400, seed=9), (0.9, 0.1), paths, seed=9)
    cfg = RunConfig(
        model=default_model_config(d_model=32, n_heads=2, d_ff=64),
        mode="diffusion_pretrain",
        train_path=str(paths[0]),
        heldout_path=str(paths[1]),
        total_steps=60,
        batch_size=8,
        log_interval=10,
        warmup_steps=5,
        heldout_size=32,
        cart_enabled=True,
        seed=9,
    )
    a = train(cfg, tmp_path / "a")
    b = train(cfg, tmp_path / "b")
    metrics_same = filecmp.cmp(a.metrics_path, b.metrics_path, shallow=False)
    ckpt_same = filecmp.cmp(a.final_checkpoint, b.final_checkpoint, shallow=False)
    params, snap = load_checkpoint(a.final_checkpoint)
    again = save_checkpoint(tmp_path / "again.ckpt", params, snap)
    round_trip = again.read_bytes() == a.final_checkpoint.read_bytes()
    ok = metrics_same and ckpt_same and round_trip
    criterion(9, ok, f"metrics CSV byte-identical: {metrics_same}; checkpoints identical: {ckpt_same}; save->load->save identical: {round_trip}")
    assert ok
