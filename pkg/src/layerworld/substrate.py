"""Cellular-automaton substrate: Life (B3/S23) on a torus, elementary 1D rules,
and detection of persistent structures (still lifes, oscillators, gliders).

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row. Grids are
numpy ``uint8`` arrays of shape ``(height, width)`` stored row-major.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Moore ring order, as (dx, dy), row-major: NW, N, NE, W, E, SW, S, SE.
MOORE_OFFSETS: tuple[tuple[int, int], ...] = (
    (-1, -1), (0, -1), (1, -1),
    (-1, 0), (1, 0),
    (-1, 1), (0, 1), (1, 1),
)


@dataclass(frozen=True)
class SubstrateState:
    """One tick of the base world. ``cells`` is read-only."""

    cells: np.ndarray
    tick: int = 0

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.uint8)
        if cells.ndim != 2:
            raise ValueError(f"cells must be 2D, got shape {cells.shape}")
        if cells.size and cells.max() > 1:
            raise ValueError("cell values must be 0 or 1")
        if self.tick < 0:
            raise ValueError("tick must be non-negative")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @classmethod
    def empty(cls, width: int, height: int, tick: int = 0) -> "SubstrateState":
        return cls(np.zeros((height, width), dtype=np.uint8), tick)

    @classmethod
    def from_cells(cls, width: int, height: int, live: Iterable[tuple[int, int]],
                   offset: tuple[int, int] = (0, 0), tick: int = 0) -> "SubstrateState":
        grid = np.zeros((height, width), dtype=np.uint8)
        ox, oy = offset
        for x, y in live:
            grid[(y + oy) % height, (x + ox) % width] = 1
        return cls(grid, tick)

    def live_cells(self) -> set[tuple[int, int]]:
        ys, xs = np.nonzero(self.cells)
        return {(int(x), int(y)) for x, y in zip(xs, ys)}

    def population(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class Neighborhood:
    center: int
    ring: tuple[int, ...]


def neighborhood(state: SubstrateState, x: int, y: int) -> Neighborhood:
    """Moore neighborhood of ``(x, y)`` with toroidal wrap, ring in MOORE_OFFSETS order."""
    if not (0 <= x < state.width and 0 <= y < state.height):
        raise IndexError(f"({x}, {y}) outside {state.width}x{state.height} grid")
    c = state.cells
    ring = tuple(int(c[(y + dy) % state.height, (x + dx) % state.width])
                 for dx, dy in MOORE_OFFSETS)
    return Neighborhood(int(c[y, x]), ring)


def neighbor_counts(cells: np.ndarray) -> np.ndarray:
    counts = np.zeros(cells.shape, dtype=np.uint8)
    for dx, dy in MOORE_OFFSETS:
        counts += np.roll(cells, (-dy, -dx), axis=(0, 1))
    return counts


def life_rule(cells: np.ndarray) -> np.ndarray:
    """B3/S23 on a toroidal uint8 grid; returns a new array."""
    n = neighbor_counts(cells)
    return ((n == 3) | ((cells == 1) & (n == 2))).astype(np.uint8)


def step_life(state: SubstrateState) -> SubstrateState:
    return SubstrateState(life_rule(state.cells), state.tick + 1)


def run_life(state: SubstrateState, ticks: int) -> SubstrateState:
    cells = state.cells
    for _ in range(ticks):
        cells = life_rule(cells)
    return SubstrateState(cells, state.tick + ticks)


# --- elementary (1D) automata -------------------------------------------------

@dataclass(frozen=True)
class ElementaryRule:
    """Wolfram-numbered rule; ``table[k]`` is the output for neighborhood bits ``k = 4l + 2c + r``."""

    rule_number: int
    table: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if not 0 <= self.rule_number <= 255:
            raise ValueError(f"rule number must be in 0..255, got {self.rule_number}")
        object.__setattr__(self, "table",
                           tuple((self.rule_number >> k) & 1 for k in range(8)))


def step_elementary(row: Sequence[int] | np.ndarray, rule: ElementaryRule) -> np.ndarray:
    """One step of a ring of cells; a 2D input steps each row independently."""
    row = np.asarray(row, dtype=np.uint8)
    if row.ndim not in (1, 2) or row.shape[-1] < 3:
        raise ValueError("row must be 1D (or a 2D batch of rows) with at least 3 cells")
    idx = (np.roll(row, 1, axis=-1) << 2) | (row << 1) | np.roll(row, -1, axis=-1)
    return np.asarray(rule.table, dtype=np.uint8)[idx]


def spacetime(rule: ElementaryRule, width: int, rows: int,
              initial: np.ndarray | None = None) -> np.ndarray:
    """Space-time diagram with ``rows`` rows; row 0 is the initial state.

    The default initial state is a single live cell at ``width // 2``. The row
    is simulated on a padded ring and cropped back to ``width`` columns so the
    light cone never wraps around inside the requested window.
    """
    if width < 1 or rows < 0:
        raise ValueError("width must be positive and rows non-negative")
    pad = rows + 1
    full = np.zeros(width + 2 * pad, dtype=np.uint8)
    if initial is None:
        full[pad + width // 2] = 1
    else:
        initial = np.asarray(initial, dtype=np.uint8)
        if initial.shape != (width,):
            raise ValueError(f"initial row must have shape ({width},)")
        full[pad:pad + width] = initial
    out = np.zeros((rows, width), dtype=np.uint8)
    for t in range(rows):
        out[t] = full[pad:pad + width]
        full = step_elementary(full, rule)
    return out


# --- persistent structures ----------------------------------------------------

@dataclass(frozen=True)
class TrackedStructure:
    id: int
    cell_set: frozenset[tuple[int, int]]
    period: int
    displacement: tuple[int, int]
    first_seen: int
    last_seen: int


def components(cells: np.ndarray) -> list[list[tuple[int, int]]]:
    """8-connected components on the torus.

    Each component is returned with unwrapped coordinates: the BFS carries
    offsets across the wrap, so a component straddling the edge comes back
    contiguous (some coordinates may be negative or exceed the grid).
    """
    h, w = cells.shape
    seen = np.zeros_like(cells, dtype=bool)
    out = []
    for y0, x0 in zip(*np.nonzero(cells)):
        if seen[y0, x0]:
            continue
        seen[y0, x0] = True
        comp = [(int(x0), int(y0))]
        queue = deque(comp)
        while queue:
            x, y = queue.popleft()
            for dx, dy in MOORE_OFFSETS:
                nx, ny = x + dx, y + dy
                wx, wy = nx % w, ny % h
                if cells[wy, wx] and not seen[wy, wx]:
                    seen[wy, wx] = True
                    comp.append((nx, ny))
                    queue.append((nx, ny))
        out.append(comp)
    return out


def canonical(cells: Iterable[tuple[int, int]]) -> tuple[frozenset[tuple[int, int]], tuple[int, int]]:
    """Shape normalized to its bounding-box origin, plus that origin."""
    cells = list(cells)
    mx = min(x for x, _ in cells)
    my = min(y for _, y in cells)
    return frozenset((x - mx, y - my) for x, y in cells), (mx, my)


def isolated_period(shape: frozenset[tuple[int, int]], max_period: int
                    ) -> tuple[int, tuple[int, int]] | None:
    """Smallest p <= max_period at which ``shape`` alone recurs up to translation."""
    margin = max_period + 2
    bw = max(x for x, _ in shape) + 1 + 2 * margin
    bh = max(y for _, y in shape) + 1 + 2 * margin
    grid = np.zeros((bh, bw), dtype=np.uint8)
    for x, y in shape:
        grid[y + margin, x + margin] = 1
    for p in range(1, max_period + 1):
        grid = life_rule(grid)
        ys, xs = np.nonzero(grid)
        if len(xs) != len(shape):
            continue
        now, origin = canonical(zip(xs.tolist(), ys.tolist()))
        if now == shape:
            return p, (origin[0] - margin, origin[1] - margin)
    return None


def detect_structures(history: Sequence[SubstrateState], max_period: int = 16
                      ) -> list[TrackedStructure]:
    """Report components of the oldest state that recur under translation.

    The period and per-period displacement come from simulating each component
    in isolation; the structure is reported only if the history then shows the
    translated shape as an intact component for at least two full periods.
    """
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    if len(history) < 2 * max_period:
        raise ValueError(f"history needs >= {2 * max_period} states, got {len(history)}")
    first = history[0]
    w, h = first.width, first.height
    index = []
    for st in history:
        found = set()
        for comp in components(st.cells):
            shape, (ox, oy) = canonical(comp)
            found.add((shape, ox % w, oy % h))
        index.append(found)

    result = []
    for comp in sorted(components(first.cells), key=lambda c: min((y, x) for x, y in c)):
        shape, (ox, oy) = canonical(comp)
        iso = isolated_period(shape, max_period)
        if iso is None:
            continue
        p, (dx, dy) = iso
        k = 0
        while (k + 1) * p < len(history):
            k += 1
            key = (shape, (ox + k * dx) % w, (oy + k * dy) % h)
            if key not in index[k * p]:
                k -= 1
                break
        if k < 2:
            continue
        result.append(TrackedStructure(
            id=len(result),
            cell_set=frozenset((x % w, y % h) for x, y in comp),
            period=p,
            displacement=(dx, dy),
            first_seen=first.tick,
            last_seen=history[k * p].tick,
        ))
    return result


def render_plaintext(cells: np.ndarray) -> str:
    """One row per line, ``.`` dead, ``O`` live, trailing newline."""
    return "".join("".join("O" if v else "." for v in row) + "\n" for row in cells)


def parse_plaintext(text: str) -> np.ndarray:
    rows = [line for line in text.splitlines() if line and not line.startswith("!")]
    if not rows:
        return np.zeros((0, 0), dtype=np.uint8)
    width = max(len(r) for r in rows)
    grid = np.zeros((len(rows), width), dtype=np.uint8)
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "O":
                grid[y, x] = 1
            elif ch != ".":
                raise ValueError(f"line {y + 1}, column {x + 1}: unexpected {ch!r}")
    return grid
