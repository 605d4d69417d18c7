"""Countdown: combine given numbers with + - * / to hit a target.

Instances are generated from a random expression tree over the numbers, so
every target is reachable and the generating expression is the oracle answer.
Intermediate values of that expression are positive integers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

from ddlm.numerics import RandomStream

OPS = "+-*/"
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_ALIASES = {"×": "*", "x": "*", "X": "*", "÷": "/", "−": "-"}
PROMPT_RE = re.compile(r"^(\d+(?:,\d+)*)>(\d+):$")


@dataclass(frozen=True)
class CountdownInstance:
    numbers: tuple[int, ...]
    target: int
    oracle_solution: str

    @property
    def prompt_text(self) -> str:
        return ",".join(str(n) for n in self.numbers) + f">{self.target}:"

    @property
    def response_text(self) -> str:
        return self.oracle_solution

    @property
    def key(self) -> tuple:
        return (tuple(sorted(self.numbers)), self.target)

    @classmethod
    def from_prompt(cls, prompt: str, response: str = "") -> "CountdownInstance":
        m = PROMPT_RE.match(prompt.strip())
        if not m:
            raise ValueError(f"not a Countdown prompt: {prompt!r}")
        numbers = tuple(int(x) for x in m.group(1).split(","))
        return cls(numbers, int(m.group(2)), response)


# -- expression trees ------------------------------------------------------


def _apply(op: str, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0:
        return None
    q = Fraction(a) / Fraction(b)
    return q if q.denominator == 1 else None


def render(node) -> str:
    """Render an expression tree with the minimum parentheses."""
    if isinstance(node, int):
        return str(node)
    op, left, right = node
    ls, rs = render(left), render(right)
    if not isinstance(left, int) and _PREC[left[0]] < _PREC[op]:
        ls = f"({ls})"
    if not isinstance(right, int):
        rop = right[0]
        if _PREC[rop] < _PREC[op] or (_PREC[rop] == _PREC[op] and (op in "-/" or rop in "-/")):
            rs = f"({rs})"
    return ls + op + rs


def _random_tree(values: list, rng: RandomStream):
    """Combine adjacent nodes until one tree remains; None on an invalid step."""
    nodes = [(v, v) for v in values]
    while len(nodes) > 1:
        i = int(rng.integers(0, len(nodes) - 1))
        (lt, lv), (rt, rv) = nodes[i], nodes[i + 1]
        op = OPS[int(rng.integers(0, 4))]
        val = _apply(op, lv, rv)
        if val is None or val <= 0:
            return None
        nodes[i : i + 2] = [((op, lt, rt), int(val))]
    return nodes[0]


def gen_countdown(rng: RandomStream, n_numbers: int = 3, value_max: int = 20, max_tries: int = 10_000) -> CountdownInstance:
    if not 2 <= n_numbers <= 4:
        raise ValueError(f"n_numbers must be in [2, 4], got {n_numbers}")
    if not 1 <= value_max <= 100:
        raise ValueError(f"value_max must be in [1, 100], got {value_max}")
    for _ in range(max_tries):
        numbers = [int(x) for x in rng.integers(1, value_max + 1, size=n_numbers)]
        order = [numbers[i] for i in rng.permutation(n_numbers)]
        built = _random_tree(order, rng)
        if built is None:
            continue
        tree, value = built
        return CountdownInstance(tuple(numbers), value, render(tree))
    raise RuntimeError("could not generate a valid Countdown instance")


# -- parsing and verification ---------------------------------------------


class _ParseError(Exception):
    pass


_TOKEN_RE = re.compile(r"\s*(?:(\d+)|(.))")


def _tokenize(text: str) -> list:
    tokens = []
    for num, ch in _TOKEN_RE.findall(text):
        if num:
            tokens.append(int(num))
        elif ch.strip():
            tokens.append(_ALIASES.get(ch, ch))
    return tokens


class _Parser:
    """Precedence climbing over + - * / with parentheses; no unary operators."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0
        self.used: list[int] = []

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def parse(self):
        value = self.expr(1)
        if self.peek() is not None:
            raise _ParseError(f"trailing token {self.peek()!r}")
        return value

    def expr(self, min_prec: int):
        lhs = self.atom()
        while True:
            op = self.peek()
            if not isinstance(op, str) or op not in _PREC or _PREC[op] < min_prec:
                return lhs
            self.take()
            rhs = self.expr(_PREC[op] + 1)
            value = _apply(op, lhs, rhs)
            if value is None:
                raise _ParseError("inexact division")
            lhs = value

    def atom(self):
        tok = self.take()
        if isinstance(tok, int):
            self.used.append(tok)
            return Fraction(tok)
        if tok == "(":
            value = self.expr(1)
            if self.take() != ")":
                raise _ParseError("unbalanced parentheses")
            return value
        raise _ParseError(f"unexpected token {tok!r}")


def evaluate(text: str) -> tuple[Fraction, list[int]]:
    """Value of an expression and the numbers it uses; raises ValueError."""
    parser = _Parser(_tokenize(text))
    try:
        return parser.parse(), parser.used
    except _ParseError as exc:
        raise ValueError(str(exc)) from None


def uses_allowed_numbers(used: list[int], numbers) -> bool:
    pool = list(numbers)
    for n in used:
        if n not in pool:
            return False
        pool.remove(n)
    return True


def verify_countdown(instance: CountdownInstance, answer_text: str) -> bool:
    try:
        value, used = evaluate(answer_text)
    except (ValueError, RecursionError):
        return False
    if not used:
        return False
    return uses_allowed_numbers(used, instance.numbers) and value == instance.target


def solve_countdown(numbers, target: int) -> list[str]:
    """Brute force over every subset order, operator choice and bracketing."""
    found: set[str] = set()

    def trees(vals):
        if len(vals) == 1:
            yield vals[0], Fraction(vals[0])
            return
        for split in range(1, len(vals)):
            for lt, lv in trees(vals[:split]):
                for rt, rv in trees(vals[split:]):
                    for op in OPS:
                        v = _apply(op, lv, rv)
                        if v is not None:
                            yield (op, lt, rt), v

    nums = list(numbers)
    for r in range(1, len(nums) + 1):
        for perm in set(permutations(nums, r)):
            for tree, value in trees(list(perm)):
                if value == target:
                    found.add(render(tree))
    return sorted(found)


def random_expression(rng: RandomStream, numbers) -> str:
    """Random well-formed expression over all ``numbers`` (no validity filter)."""
    vals = [numbers[i] for i in rng.permutation(len(numbers))]
    nodes: list = list(vals)
    while len(nodes) > 1:
        i = int(rng.integers(0, len(nodes) - 1))
        nodes[i : i + 2] = [(OPS[int(rng.integers(0, 4))], nodes[i], nodes[i + 1])]
    return render(nodes[0])


__all__ = [
    "CountdownInstance",
    "evaluate",
    "gen_countdown",
    "random_expression",
    "render",
    "solve_countdown",
    "verify_countdown",
]
