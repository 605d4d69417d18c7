import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddlm.errors import CapacityError, DataError
from ddlm.numerics import RandomStream
from ddlm.tasks import TASKS, emit_dataset, generate_instances, get_task, read_jsonl
from ddlm.tasks.countdown import CountdownInstance, evaluate, gen_countdown, render, solve_countdown, verify_countdown
from ddlm.tasks.dataset import encode_pair, pack, required_seq_len
from ddlm.tasks.sudoku import (
    SudokuInstance,
    gen_sudoku,
    is_valid_solution,
    parse_grid,
    render_grid,
    solve_sudoku,
    verify_sudoku,
)
from ddlm.tasks.tokenizer import ALPHABET, Tokenizer

TOK = Tokenizer()


class TestTokenizer:
    def test_specials(self):
        assert (TOK.pad_id, TOK.bos_id, TOK.eos_id, TOK.mask_id) == (0, 1, 2, 3)
        assert TOK.vocab_size == 4 + len(ALPHABET)

    def test_full_alphabet_round_trip(self):
        assert TOK.decode(TOK.encode(ALPHABET)) == ALPHABET

    def test_random_strings_round_trip(self):
        rng = np.random.default_rng(0)
        chars = np.array(list(ALPHABET))
        for _ in range(10000):
            s = "".join(chars[rng.integers(0, chars.size, size=rng.integers(0, 30))])
            ids = TOK.encode(s)
            assert TOK.mask_id not in ids and TOK.decode(ids) == s

    def test_out_of_alphabet(self):
        with pytest.raises(DataError):
            TOK.encode("é")

    def test_decode_eos_and_specials(self):
        ids = [TOK.bos_id] + TOK.encode("ab") + [TOK.eos_id] + TOK.encode("c")
        assert TOK.decode(ids) == "abc"
        assert TOK.decode(ids, stop_at_eos=True) == "ab"
        assert TOK.render([TOK.mask_id]) == "<mask>"


class TestCountdown:
    def test_hand_examples(self):
        inst = CountdownInstance((3, 5, 7), 22, "3*5+7")
        assert evaluate("3*5+7")[0] == 22
        assert verify_countdown(inst, "3*5+7")
        assert not verify_countdown(inst, "3*5+8")
        assert not verify_countdown(inst, "garbage")

    def test_rules(self):
        inst = CountdownInstance((6, 3, 4), 2, "6/3")
        assert verify_countdown(inst, "6/3")
        assert verify_countdown(inst, "(6-4)")
        assert not verify_countdown(inst, "6/3*4/4")  # 4 used twice
        assert not verify_countdown(inst, "4/6*3")  # exact division required
        assert not verify_countdown(inst, "2")  # 2 is not given
        assert not verify_countdown(inst, "")
        assert not verify_countdown(inst, "6/(3-3)")

    def test_precedence(self):
        assert evaluate("2+3*4")[0] == 14
        assert evaluate("(2+3)*4")[0] == 20
        assert evaluate("8-4-2")[0] == 2
        assert evaluate("8/4/2")[0] == 1
        assert evaluate("12/(2*3)")[0] == 2

    def test_fraction_intermediate_rejected(self):
        with pytest.raises(ValueError):
            evaluate("1/2*4")

    def test_render_minimal_parens(self):
        assert render(("-", 8, ("-", 4, 2))) == "8-(4-2)"
        assert render(("-", ("-", 8, 4), 2)) == "8-4-2"
        assert render(("*", ("+", 1, 2), 3)) == "(1+2)*3"
        assert render(("+", 1, ("*", 2, 3))) == "1+2*3"
        assert render(("/", 12, ("*", 2, 3))) == "12/(2*3)"

    def test_generated_self_verify(self):
        insts = generate_instances("countdown", 1000, seed=1)
        for inst in insts:
            assert verify_countdown(inst, inst.oracle_solution)
            value, used = evaluate(inst.oracle_solution)
            assert value == inst.target and sorted(used) == sorted(inst.numbers)

    def test_two_numbers_solvable(self):
        for i in range(50):
            inst = gen_countdown(RandomStream(i), n_numbers=2, value_max=9)
            assert solve_countdown(inst.numbers, inst.target)

    def test_solver_contains_oracle_value(self):
        for inst in generate_instances("countdown", 30, seed=2):
            sols = solve_countdown(inst.numbers, inst.target)
            assert sols and all(verify_countdown(inst, s) for s in sols)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            gen_countdown(RandomStream(0), n_numbers=5)
        with pytest.raises(ValueError):
            gen_countdown(RandomStream(0), value_max=101)

    def test_prompt_round_trip(self):
        inst = gen_countdown(RandomStream(3))
        back = CountdownInstance.from_prompt(inst.prompt_text, inst.response_text)
        assert back == inst

    @given(st.text(alphabet="0123456789+-*/() x", max_size=20))
    def test_verifier_never_raises(self, text):
        assert verify_countdown(CountdownInstance((3, 5, 7), 22, "3*5+7"), text) in (True, False)

    @given(st.lists(st.integers(1, 12), min_size=2, max_size=3), st.integers(1, 60))
    def test_solver_sound(self, numbers, target):
        inst = CountdownInstance(tuple(numbers), target, "")
        for s in solve_countdown(numbers, target):
            assert verify_countdown(inst, s)
            assert evaluate(s)[0] == Fraction(target)


class TestSudoku:
    def test_full_clues(self):
        inst = gen_sudoku(RandomStream(0), clue_count=16)
        assert inst.givens == inst.solution

    def test_generated_valid(self):
        for i in range(200):
            inst = gen_sudoku(RandomStream(i), clue_count=8)
            assert is_valid_solution(inst.solution)
            assert inst.clue_count == 8
            assert inst.solution in solve_sudoku(inst.givens)
            assert all(g in (0, s) for gr, sr in zip(inst.givens, inst.solution) for g, s in zip(gr, sr))

    def test_verify(self):
        inst = gen_sudoku(RandomStream(5), clue_count=6)
        good = render_grid(inst.solution)
        assert verify_sudoku(inst, good)
        assert not verify_sudoku(inst, "not a grid")
        grid = [list(r) for r in inst.solution]
        grid[0][0], grid[0][1] = grid[0][1], grid[0][0]
        assert not verify_sudoku(inst, render_grid(grid))

    def test_altered_given(self):
        inst = gen_sudoku(RandomStream(6), clue_count=12)
        r, c = next((r, c) for r in range(4) for c in range(4) if inst.givens[r][c])
        sols = [s for s in solve_sudoku(inst.givens)]
        grid = [list(row) for row in inst.solution]
        grid[r][c] = grid[r][c] % 4 + 1
        assert not verify_sudoku(inst, render_grid(grid))
        assert sols

    def test_duplicate_in_row(self):
        inst = SudokuInstance(((0,) * 4,) * 4, ((1, 2, 3, 4), (3, 4, 1, 2), (2, 1, 4, 3), (4, 3, 2, 1)))
        assert verify_sudoku(inst, "1234/3412/2143/4321")
        assert not verify_sudoku(inst, "1134/3412/2143/4321")

    def test_parse_formats(self):
        assert parse_grid("1234 3412\n2143 4321") == ((1, 2, 3, 4), (3, 4, 1, 2), (2, 1, 4, 3), (4, 3, 2, 1))
        assert parse_grid("12.4/3412/2143/4321")[0] == (1, 2, 0, 4)
        assert parse_grid("1234/3412/2143") is None

    def test_bad_clue_count(self):
        with pytest.raises(ValueError):
            gen_sudoku(RandomStream(0), clue_count=3)

    def test_prompt_round_trip(self):
        inst = gen_sudoku(RandomStream(7), clue_count=9)
        assert SudokuInstance.from_prompt(inst.prompt_text, inst.response_text) == inst


class TestDataset:
    def test_split_counts_and_determinism(self, tmp_path):
        insts = generate_instances("countdown", 150, seed=4)
        unique = list({i.key: i for i in insts}.values())[:100]
        paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
        assert emit_dataset(unique, (0.9, 0.1), paths, seed=1) == [90, 10]
        first = [p.read_bytes() for p in paths]
        emit_dataset(unique, (0.9, 0.1), paths, seed=1)
        assert [p.read_bytes() for p in paths] == first

    def test_disjoint_and_self_verifying(self, tmp_path):
        for task in TASKS:
            insts = generate_instances(task, 400, seed=5)
            paths = [tmp_path / f"{task}_tr.jsonl", tmp_path / f"{task}_ho.jsonl"]
            emit_dataset(insts, (0.8, 0.2), paths, seed=0)
            tr, ho = read_jsonl(paths[0]), read_jsonl(paths[1])
            spec = get_task(task)
            keys = lambda recs: {spec.instance(r).key for r in recs}  # noqa: E731
            assert not keys(tr) & keys(ho)
            assert all(spec.verify_record(r, r["response"]) for r in tr + ho)

    def test_bad_ratios(self, tmp_path):
        with pytest.raises(ValueError):
            emit_dataset([], (0.5, 0.6), [tmp_path / "a", tmp_path / "b"])

    def test_io_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_dataset(generate_instances("countdown", 3, 0), (1.0,), [blocker / "sub" / "x.jsonl"])

    def test_read_errors(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"prompt": "a", "response": "b"}\nnot json\n')
        with pytest.raises(DataError, match="bad.jsonl:2"):
            read_jsonl(p)
        p.write_text(json.dumps({"prompt": "a"}) + "\n")
        with pytest.raises(DataError):
            read_jsonl(p)

    def test_packing(self):
        ids, plen = encode_pair(TOK, "1,2>3:", "1+2", 12)
        assert ids[0] == TOK.bos_id and plen == 6
        assert TOK.decode(ids[1:], stop_at_eos=True) == "1,2>3:1+2"
        assert ids[-2:] == [TOK.eos_id, TOK.eos_id]
        with pytest.raises(CapacityError):
            encode_pair(TOK, "1,2>3:", "1+2", 9)
        recs = [{"prompt": "1,2>3:", "response": "1+2"}, {"prompt": "10,2>5:", "response": "10/2"}]
        n = required_seq_len(recs, TOK, 16)
        data = pack(recs, TOK, n)
        assert data.tokens.shape == (2, 1 + 7 + 16) and data.prompt_lengths.tolist() == [6, 7]
