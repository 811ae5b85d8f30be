"""Reading and writing Life patterns in RLE format."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

LIFE_RULES = {"B3/S23", "23/3"}
MAX_LINE = 70

_HEADER = re.compile(
    r"^\s*x\s*=\s*(\d+)\s*,\s*y\s*=\s*(\d+)\s*(?:,\s*rule\s*=\s*(\S+)\s*)?$", re.IGNORECASE)


class RLEError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Pattern:
    width: int
    height: int
    cells: frozenset[tuple[int, int]]
    rule: str = "B3/S23"

    def to_grid(self) -> np.ndarray:
        grid = np.zeros((self.height, self.width), dtype=np.uint8)
        for x, y in self.cells:
            grid[y, x] = 1
        return grid

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "Pattern":
        ys, xs = np.nonzero(grid)
        return cls(grid.shape[1], grid.shape[0],
                   frozenset(zip(xs.tolist(), ys.tolist())))


def parse_rle(text: str) -> Pattern:
    lines = text.splitlines()
    lineno = 0
    header = None
    while lineno < len(lines):
        line = lines[lineno]
        lineno += 1
        if line.startswith("#") or not line.strip():
            continue
        header = line
        break
    if header is None:
        raise RLEError("missing header", lineno or 1, 1)
    m = _HEADER.match(header)
    if not m:
        raise RLEError(f"malformed header {header.strip()!r}", lineno, 1)
    width, height = int(m.group(1)), int(m.group(2))
    rule = m.group(3) or "B3/S23"
    if rule.upper() not in LIFE_RULES:
        raise RLEError(f"unsupported rule {rule!r}", lineno, header.find(rule) + 1)

    cells = set()
    x = y = 0
    count = None
    done = False
    for ln in range(lineno, len(lines)):
        line = lines[ln]
        if done:
            break
        if line.startswith("#"):
            continue
        for col, ch in enumerate(line, start=1):
            if ch.isdigit():
                count = (count or 0) * 10 + int(ch)
                if count > 10**7:
                    raise RLEError("run count overflow", ln + 1, col)
                continue
            if ch.isspace():
                if count is not None:
                    raise RLEError("whitespace inside run", ln + 1, col)
                continue
            n = 1 if count is None else count
            count = None
            if ch in "bo":
                if x + n > width:
                    raise RLEError(f"run exceeds declared width {width}", ln + 1, col)
                if ch == "o":
                    if y >= height:
                        raise RLEError(f"row exceeds declared height {height}", ln + 1, col)
                    cells.update((x + i, y) for i in range(n))
                x += n
            elif ch == "$":
                y += n
                x = 0
            elif ch == "!":
                done = True
                break
            else:
                raise RLEError(f"unexpected character {ch!r}", ln + 1, col)
    if not done:
        raise RLEError("missing terminating '!'", len(lines), 1)
    return Pattern(width, height, frozenset(cells), "B3/S23")


def emit_rle(pattern: Pattern) -> str:
    """Canonical RLE: trailing dead cells dropped, runs merged, lines <= 70 chars."""
    tokens = []
    rows = {}
    for x, y in pattern.cells:
        rows.setdefault(y, set()).add(x)
    pending_rows = 0
    for y in range(pattern.height):
        live = rows.get(y)
        if not live:
            pending_rows += 1
            continue
        if tokens or pending_rows:
            n = pending_rows + (1 if tokens else 0)
            if n:
                tokens.append(_run(n, "$"))
        pending_rows = 0
        x = 0
        for start, length in _runs(sorted(live)):
            if start > x:
                tokens.append(_run(start - x, "b"))
            tokens.append(_run(length, "o"))
            x = start + length
    tokens.append("!")

    body, line = [], ""
    for tok in tokens:
        if len(line) + len(tok) > MAX_LINE:
            body.append(line)
            line = ""
        line += tok
    body.append(line)
    header = f"x = {pattern.width}, y = {pattern.height}, rule = B3/S23"
    return header + "\n" + "\n".join(body) + "\n"


def _run(n: int, ch: str) -> str:
    return ch if n == 1 else f"{n}{ch}"


def _runs(xs: list[int]):
    start = prev = xs[0]
    for x in xs[1:]:
        if x == prev + 1:
            prev = x
            continue
        yield start, prev - start + 1
        start = prev = x
    yield start, prev - start + 1


def load_rle(path) -> Pattern:
    with open(path, encoding="utf-8") as fh:
        return parse_rle(fh.read())
