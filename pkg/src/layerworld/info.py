"""Plug-in information estimators on discrete samples, and the discretizer that
turns continuous latents into symbols. All quantities are in bits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


_RADIX_LIMIT = 1 << 62


def _dense(codes: np.ndarray) -> np.ndarray:
    _, inv = np.unique(codes, return_inverse=True)
    return inv.reshape(-1).astype(np.int64)


def _combine(columns) -> np.ndarray:
    """Mixed-radix joint code of integer columns, re-densified before overflow."""
    out = None
    radix_used = 1
    for col in columns:
        col = np.asarray(col, dtype=np.int64)
        if col.size and col.min() < 0:
            col = _dense(col)
        base = int(col.max()) + 1 if col.size else 1
        if out is None:
            out, radix_used = col.copy(), base
            continue
        if radix_used * base >= _RADIX_LIMIT:
            out = _dense(out)
            radix_used = int(out.max()) + 1 if out.size else 1
        out = out * base + col
        radix_used *= base
    return out


def as_symbols(samples) -> np.ndarray:
    """Map samples to dense integer codes.

    1D input is coded value-wise; 2D input ``(n, dims)`` is coded row-wise, so
    each distinct row becomes one joint symbol.
    """
    a = np.asarray(samples)
    if a.ndim == 1:
        return _dense(a)
    if a.ndim == 2:
        if a.shape[1] == 0:
            return np.zeros(a.shape[0], dtype=np.int64)
        if np.issubdtype(a.dtype, np.integer) or a.dtype == bool:
            return _dense(_combine(a.T))
        return _dense(_combine([_dense(c) for c in a.T]))
    raise ValueError(f"samples must be 1D or 2D, got shape {a.shape}")


def joint_symbols(*columns) -> np.ndarray:
    """Joint code of several variables sampled in lockstep."""
    if not columns:
        raise ValueError("need at least one variable")
    return _dense(_combine([as_symbols(c) for c in columns]))


def entropy_from_counts(counts) -> float:
    c = np.asarray(counts, dtype=np.float64).ravel()
    c = c[c > 0]
    if c.size == 0:
        return 0.0
    p = c / c.sum()
    return float(-(p * np.log2(p)).sum())


def entropy(samples) -> float:
    codes = as_symbols(samples)
    return entropy_from_counts(np.bincount(codes)) if codes.size else 0.0


def mutual_information(x, y) -> float:
    """Plug-in I(X;Y) in bits from paired samples."""
    cx, cy = as_symbols(x), as_symbols(y)
    if cx.shape != cy.shape:
        raise ValueError("x and y need the same number of samples")
    if cx.size == 0:
        return 0.0
    joint = cx * (int(cy.max()) + 1) + cy
    mi = entropy_from_counts(np.bincount(cx)) + entropy_from_counts(np.bincount(cy)) \
        - entropy_from_counts(np.bincount(joint))
    return max(mi, 0.0)


def mi_from_joint(table) -> float:
    """I(X;Y) in bits for an exact joint probability table (rows X, columns Y)."""
    p = np.asarray(table, dtype=np.float64)
    p = p / p.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float((p[nz] * np.log2(p[nz] / (px @ py)[nz])).sum())


def mi_exact(pmf: dict[tuple, float], x_idx, y_idx) -> float:
    """I(X_a; X_b) for an exact pmf over tuples, with X_a, X_b picked by index lists."""
    def marginal(idx):
        out = {}
        for k, p in pmf.items():
            key = tuple(k[i] for i in idx)
            out[key] = out.get(key, 0.0) + p
        return out

    def h(dist):
        return -sum(p * np.log2(p) for p in dist.values() if p > 0)

    x_idx, y_idx = list(x_idx), list(y_idx)
    return h(marginal(x_idx)) + h(marginal(y_idx)) - h(marginal(x_idx + y_idx))


@dataclass
class Discretizer:
    """Per-dimension binning fitted on a calibration window.

    ``uniform`` splits [min, max] into equal bins; ``quantile`` puts edges at
    the empirical quantiles. A dimension with no more distinct values than bins
    gets edges at the midpoints between those values, so discrete data is
    never merged. Values outside the calibration range fall into the edge bins.
    At most ``bins_per_dim ** dims`` joint cells exist.
    """

    bins_per_dim: int = 4
    strategy: str = "quantile"
    edges: list[np.ndarray] | None = None
    ranges: list[tuple[float, float]] | None = None

    def __post_init__(self):
        if self.bins_per_dim < 2:
            raise ValueError("bins_per_dim must be >= 2")
        if self.strategy not in ("uniform", "quantile"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def fit(self, data) -> "Discretizer":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        srt = np.sort(data, axis=0)
        distinct = 1 + (np.diff(srt, axis=0) != 0).sum(axis=0)
        if self.strategy == "uniform":
            frac = np.linspace(0.0, 1.0, self.bins_per_dim + 1)[1:-1]
            cuts = srt[0] + frac[:, None] * (srt[-1] - srt[0])
        else:
            qs = np.arange(1, self.bins_per_dim) / self.bins_per_dim
            cuts = np.quantile(srt, qs, axis=0)
        edges = [cuts[:, d] for d in range(data.shape[1])]
        for d in np.flatnonzero((distinct <= self.bins_per_dim) | (np.diff(cuts, axis=0) == 0).any(axis=0)):
            if distinct[d] <= self.bins_per_dim:
                values = np.unique(srt[:, d])
                edges[d] = 0.5 * (values[1:] + values[:-1])
            else:
                edges[d] = np.unique(cuts[:, d])
        self.edges = edges
        self.ranges = [(float(lo), float(hi)) for lo, hi in zip(srt[0], srt[-1])]
        return self

    def transform(self, data) -> np.ndarray:
        """Bin indices, shape (n, dims)."""
        if self.edges is None:
            raise RuntimeError("discretizer is not fitted")
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.shape[1] != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} dims, got {data.shape[1]}")
        if len({len(e) for e in self.edges}) == 1:
            e = np.array(self.edges).T                          # (edges, dims)
            return (data[:, None, :] >= e[None]).sum(axis=1).astype(np.int64)
        out = np.empty(data.shape, dtype=np.int64)
        for d, e in enumerate(self.edges):
            out[:, d] = np.searchsorted(e, data[:, d], side="right")
        return out

    def symbols(self, data) -> np.ndarray:
        """One joint symbol per sample."""
        return as_symbols(self.transform(data))

    def fit_symbols(self, data) -> np.ndarray:
        return self.fit(data).symbols(data)
