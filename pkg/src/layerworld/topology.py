"""Synergy-weighted simplicial complexes and their persistent homology over GF(2).

Appearance values are negated weights, so a simplex with more synergy enters
the filtration earlier and ``K(alpha) = {s : a(s) <= alpha}`` grows with alpha.
Vertices appear at -inf; simplices with zero weight never appear (+inf).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class WeightedComplex:
    vertices: tuple[int, ...]
    simplices: dict[tuple[int, ...], float]
    k_max: int = 3

    def faces(self, s: tuple[int, ...]):
        return [s[:i] + s[i + 1:] for i in range(len(s))] if len(s) > 1 else []

    def check(self) -> None:
        for s, a in self.simplices.items():
            for f in self.faces(s):
                if f not in self.simplices:
                    raise ValueError(f"face {f} of {s} missing")
                if self.simplices[f] > a:
                    raise ValueError(f"face {f} enters at {self.simplices[f]} after {s} at {a}")

    def at(self, alpha: float) -> list[tuple[int, ...]]:
        """Simplices present at scale ``alpha``."""
        return [s for s, a in self.simplices.items() if a <= alpha]

    def euler_characteristic(self, alpha: float) -> int:
        return sum((-1) ** (len(s) - 1) for s in self.at(alpha))

    def relabel(self, mapping: dict[int, int]) -> "WeightedComplex":
        simp = {tuple(sorted(mapping[v] for v in s)): a for s, a in self.simplices.items()}
        return WeightedComplex(tuple(sorted(mapping[v] for v in self.vertices)), simp, self.k_max)


def build_complex(weights, gamma=None, vertices=None, k_max: int = 3) -> WeightedComplex:
    """Filtered complex from subset weights.

    ``weights`` maps sorted agent tuples (size 2..k_max) to bits (a mapping or
    a SynergyWeights). An edge absent from ``weights`` takes its weight from
    ``gamma`` (a matrix or ChannelGraph) as max(G[i, j], G[j, i]). Raw
    appearance is ``-w``; zero weight means never. Closure repair then raises
    every simplex to the latest of its faces.
    """
    w = dict(getattr(weights, "weights", weights) or {})
    g = getattr(gamma, "gamma", gamma)
    if vertices is None:
        vs = {v for s in w for v in s}
        if g is not None:
            vs |= set(range(np.asarray(g).shape[0]))
        vertices = sorted(vs)
    vertices = tuple(sorted(vertices))
    if g is not None:
        g = np.asarray(g, dtype=np.float64)
        for i, j in combinations(vertices, 2):
            if (i, j) not in w:
                w[(i, j)] = max(g[i, j], g[j, i])

    raw: dict[tuple[int, ...], float] = {(v,): -INF for v in vertices}
    for size in range(2, k_max + 1):
        for s in combinations(vertices, size):
            val = w.get(s, 0.0)
            if val < 0:
                raise ValueError(f"negative weight {val} for {s}")
            raw[s] = -val if val > 0 else INF

    appear: dict[tuple[int, ...], float] = {}
    for s in sorted(raw, key=len):
        a = raw[s]
        if len(s) > 1:
            a = max([a] + [appear[f] for f in combinations(s, len(s) - 1)])
        appear[s] = a
    return WeightedComplex(vertices, {s: a for s, a in appear.items() if a < INF}, k_max)


def complex_from_simplices(simplices: dict[tuple[int, ...], float], k_max: int | None = None
                           ) -> WeightedComplex:
    simplices = {tuple(sorted(s)): float(a) for s, a in simplices.items()}
    verts = tuple(sorted({v for s in simplices for v in s}))
    k = max((len(s) for s in simplices), default=1) if k_max is None else k_max
    return WeightedComplex(verts, simplices, k)


@dataclass(frozen=True)
class Barcode:
    intervals: tuple[tuple[int, float, float], ...]

    def betti_at(self, alpha: float, k: int) -> int:
        return sum(1 for d, b, e in self.intervals if d == k and b <= alpha < e)

    def betti_numbers(self, alpha: float, max_dim: int) -> list[int]:
        return [self.betti_at(alpha, k) for k in range(max_dim + 1)]

    def to_tsv(self) -> str:
        lines = ["dim\tbirth\tdeath"]
        for d, b, e in self.intervals:
            lines.append(f"{d}\t{_fmt(b)}\t{_fmt(e)}")
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    if v == INF:
        return "inf"
    if v == -INF:
        return "-inf"
    return repr(float(v))


def filtration_order(cx: WeightedComplex) -> list[tuple[int, ...]]:
    return sorted(cx.simplices, key=lambda s: (cx.simplices[s], len(s), s))


def persistence(cx: WeightedComplex) -> Barcode:
    """Standard column reduction of the filtered boundary matrix over GF(2)."""
    cx.check()
    order = filtration_order(cx)
    index = {s: i for i, s in enumerate(order)}
    columns: list[set[int]] = []
    for s in order:
        columns.append({index[f] for f in cx.faces(s)})

    pivot_of: dict[int, int] = {}
    low = [-1] * len(order)
    for j, col in enumerate(columns):
        while col:
            piv = max(col)
            other = pivot_of.get(piv)
            if other is None:
                break
            col ^= columns[other]
        if col:
            piv = max(col)
            pivot_of[piv] = j
            low[j] = piv

    intervals = []
    paired = set()
    for j, piv in enumerate(low):
        if piv >= 0:
            paired.add(piv)
            paired.add(j)
            s = order[piv]
            intervals.append((len(s) - 1, cx.simplices[s], cx.simplices[order[j]]))
    for i, s in enumerate(order):
        if i not in paired and not columns[i]:
            intervals.append((len(s) - 1, cx.simplices[s], INF))
    intervals.sort(key=lambda t: (t[0], t[1], t[2]))
    return Barcode(tuple(intervals))


def betti(cx: WeightedComplex, alpha: float, k: int, barcode: Barcode | None = None) -> int:
    return (barcode or persistence(cx)).betti_at(alpha, k)


def coherence_index(cx: WeightedComplex, alpha: float, barcode: Barcode | None = None) -> float:
    """(b0 - 1) + sum_{k>=1} b_k at ``alpha``; 0 for an empty complex."""
    bc = barcode or persistence(cx)
    top = max((len(s) for s in cx.simplices), default=1)
    betti_numbers = bc.betti_numbers(alpha, top)
    if sum(betti_numbers) == 0:
        return 0.0
    return float(max(0, betti_numbers[0] - 1) + sum(betti_numbers[1:]))
