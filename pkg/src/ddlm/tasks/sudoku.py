"""4x4 Sudoku: randomized backtracking generator, exhaustive solver, verifier.

Grids render as four rows of digits joined by ``/``; blanks are ``.``, e.g.
``12.4/3.12/..../4321``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ddlm.numerics import RandomStream

SIZE = 4
BOX = 2
_ROW_RE = re.compile(r"[1-4.]{4}")


def _peers(r: int, c: int):
    br, bc = BOX * (r // BOX), BOX * (c // BOX)
    for i in range(SIZE):
        yield r, i
        yield i, c
    for i in range(br, br + BOX):
        for j in range(bc, bc + BOX):
            yield i, j


def _allowed(grid, r: int, c: int, v: int) -> bool:
    return all(grid[i][j] != v for i, j in _peers(r, c) if (i, j) != (r, c))


def render_grid(grid) -> str:
    return "/".join("".join(str(v) if v else "." for v in row) for row in grid)


def parse_grid(text: str):
    """Parse a rendered grid; returns None if malformed."""
    rows = [r for r in re.split(r"[/\s]+", text.strip()) if r]
    if len(rows) != SIZE or not all(_ROW_RE.fullmatch(r) for r in rows):
        return None
    return tuple(tuple(0 if ch == "." else int(ch) for ch in row) for row in rows)


def is_valid_solution(grid) -> bool:
    target = set(range(1, SIZE + 1))
    for i in range(SIZE):
        if set(grid[i]) != target or {grid[r][i] for r in range(SIZE)} != target:
            return False
    for br in range(0, SIZE, BOX):
        for bc in range(0, SIZE, BOX):
            if {grid[r][c] for r in range(br, br + BOX) for c in range(bc, bc + BOX)} != target:
                return False
    return True


@dataclass(frozen=True)
class SudokuInstance:
    givens: tuple
    solution: tuple

    size = SIZE

    @property
    def clue_count(self) -> int:
        return sum(1 for row in self.givens for v in row if v)

    @property
    def prompt_text(self) -> str:
        return render_grid(self.givens) + ":"

    @property
    def response_text(self) -> str:
        return render_grid(self.solution)

    @property
    def key(self) -> tuple:
        return self.givens

    @classmethod
    def from_prompt(cls, prompt: str, response: str = "") -> "SudokuInstance":
        givens = parse_grid(prompt.rstrip(":"))
        if givens is None:
            raise ValueError(f"not a Sudoku prompt: {prompt!r}")
        solution = parse_grid(response) if response else None
        return cls(givens, solution)


def _fill(grid, rng: RandomStream | None) -> bool:
    for r in range(SIZE):
        for c in range(SIZE):
            if grid[r][c] == 0:
                values = list(range(1, SIZE + 1))
                if rng is not None:
                    values = [values[i] for i in rng.permutation(SIZE)]
                for v in values:
                    if _allowed(grid, r, c, v):
                        grid[r][c] = v
                        if _fill(grid, rng):
                            return True
                grid[r][c] = 0
                return False
    return True


def solve_sudoku(givens, limit: int | None = None) -> list[tuple]:
    """Every completion of ``givens`` (up to ``limit``) by plain backtracking."""
    grid = [list(row) for row in givens]
    solutions: list[tuple] = []

    def search() -> bool:
        for r in range(SIZE):
            for c in range(SIZE):
                if grid[r][c] == 0:
                    for v in range(1, SIZE + 1):
                        if _allowed(grid, r, c, v):
                            grid[r][c] = v
                            if search():
                                return True
                    grid[r][c] = 0
                    return False
        solutions.append(tuple(tuple(row) for row in grid))
        return limit is not None and len(solutions) >= limit

    for r in range(SIZE):
        for c in range(SIZE):
            v = givens[r][c]
            if v and not _allowed(givens, r, c, v):
                return []
    search()
    return solutions


def gen_sudoku(rng: RandomStream, clue_count: int = 8) -> SudokuInstance:
    if not 4 <= clue_count <= SIZE * SIZE:
        raise ValueError(f"clue_count must be in [4, {SIZE * SIZE}], got {clue_count}")
    grid = [[0] * SIZE for _ in range(SIZE)]
    _fill(grid, rng)
    solution = tuple(tuple(row) for row in grid)
    cells = [divmod(int(i), SIZE) for i in rng.permutation(SIZE * SIZE)]
    for r, c in cells[: SIZE * SIZE - clue_count]:
        grid[r][c] = 0
    return SudokuInstance(tuple(tuple(row) for row in grid), solution)


def verify_sudoku(instance: SudokuInstance, answer_text: str) -> bool:
    grid = parse_grid(answer_text)
    if grid is None or any(0 in row for row in grid):
        return False
    for r in range(SIZE):
        for c in range(SIZE):
            g = instance.givens[r][c]
            if g and grid[r][c] != g:
                return False
    return is_valid_solution(grid)
