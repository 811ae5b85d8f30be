"""Bandwidth-limited messaging between agents.

Every agent owns a codebook over a shared alphabet of ``2**kappa`` symbols:
the encoder maps its latent to the index of the nearest centroid, the decoder
maps a received symbol to a vector in the receiver's latent space. Routing is
two-phase: symbols encoded from tick-t latents are delivered into the
receivers' message slots at tick t+1.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import agents as ag
from .info import Discretizer, as_symbols, mutual_information
from .rng import substream


class InsufficientSamples(ValueError):
    """Raised when a sliding window holds fewer samples than an estimator needs."""


# --- topology -----------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    """Directed communication graph plus the fixed slot layout of every receiver.

    ``slot_sender[j, s]`` is the agent feeding slot ``s`` of agent ``j``,
    or -1 for an empty slot (which carries the zero vector).
    """

    n: int
    slot_sender: np.ndarray

    @property
    def n_slots(self) -> int:
        return self.slot_sender.shape[1]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted({(int(i), j) for j in range(self.n) for i in self.slot_sender[j] if i >= 0})

    def has_edge(self, i: int, j: int) -> bool:
        return bool(np.any(self.slot_sender[j] == i))

    def out_neighbors(self, i: int) -> list[int]:
        return sorted({j for (a, j) in self.edges if a == i})

    def reachable(self, start: int, hops: int) -> set[int]:
        """Agents within ``hops`` directed steps of ``start`` (including it)."""
        seen, frontier = {start}, {start}
        for _ in range(hops):
            frontier = {j for i in frontier for j in self.out_neighbors(i)} - seen
            seen |= frontier
        return seen

    @classmethod
    def from_edges(cls, n: int, edges, n_slots: int | None = None) -> "Topology":
        inbound = {j: sorted({i for i, jj in edges if jj == j and i != j}) for j in range(n)}
        width = max((len(v) for v in inbound.values()), default=0)
        width = width if n_slots is None else n_slots
        table = np.full((n, width), -1, dtype=np.int64)
        for j, senders in inbound.items():
            if len(senders) > width:
                raise ValueError(f"agent {j} has {len(senders)} senders but only {width} slots")
            table[j, :len(senders)] = senders
        return cls(n, table)

    @classmethod
    def grid(cls, cols: int, rows: int) -> "Topology":
        """Toroidal 4-neighbour grid; slots ordered north, east, south, west."""
        n = cols * rows
        table = np.full((n, 4), -1, dtype=np.int64)
        for j in range(n):
            c, r = j % cols, j // cols
            nbrs = [(c, r - 1), (c + 1, r), (c, r + 1), (c - 1, r)]
            for s, (cc, rr) in enumerate(nbrs):
                i = (rr % rows) * cols + (cc % cols)
                if i != j:
                    table[j, s] = i
        return cls(n, table)

    @classmethod
    def ring(cls, n: int) -> "Topology":
        """Directed cycle i -> i+1."""
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)] if n > 1 else [])

    @classmethod
    def full(cls, n: int) -> "Topology":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(n) if i != j])

    @classmethod
    def empty(cls, n: int, n_slots: int = 0) -> "Topology":
        return cls(n, np.full((n, n_slots), -1, dtype=np.int64))

    @classmethod
    def build(cls, kind: str, cols: int, rows: int) -> "Topology":
        n = cols * rows
        if kind == "grid":
            return cls.grid(cols, rows)
        if kind == "ring":
            return cls.ring(n)
        if kind == "full":
            return cls.full(n)
        if kind == "none":
            return cls.empty(n)
        raise ValueError(f"unknown topology {kind!r}")


# --- codebooks ----------------------------------------------------------------

@dataclass(frozen=True)
class Codebook:
    owner: int
    centroids: np.ndarray
    decode_map: np.ndarray

    @property
    def alphabet_size(self) -> int:
        return self.centroids.shape[0]


def encode(book: Codebook, latent) -> int:
    """Nearest centroid (Euclidean); ties go to the lowest index."""
    v = np.asarray(latent, dtype=np.float64)
    if v.shape != book.centroids.shape[1:]:
        raise ValueError(f"latent has shape {v.shape}, codebook expects {book.centroids.shape[1:]}")
    return int(np.argmin(((book.centroids - v) ** 2).sum(axis=1)))


def decode(book: Codebook, symbol: int) -> np.ndarray:
    if not 0 <= symbol < book.alphabet_size:
        raise IndexError(f"symbol {symbol} outside alphabet of size {book.alphabet_size}")
    return book.decode_map[symbol].copy()


@dataclass(frozen=True)
class CodebookBank:
    """Codebooks of all agents: ``centroids`` and ``decode_map`` are (n, 2**kappa, d)."""

    kappa: int
    centroids: np.ndarray
    decode_map: np.ndarray

    @property
    def alphabet_size(self) -> int:
        return 1 << self.kappa

    @property
    def n(self) -> int:
        return self.centroids.shape[0]

    @classmethod
    def init(cls, n: int, kappa: int, dim: int, seed: int, scale: float = 1.0) -> "CodebookBank":
        """Centroids uniform in [-scale, scale] (the tanh range), decoders equal to centroids."""
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        k = 1 << kappa
        c = np.empty((n, k, dim))
        for i in range(n):
            c[i] = substream(seed, "codebook-init", i).uniform(-scale, scale, size=(k, dim))
        return cls(kappa, c, c.copy())

    @classmethod
    def shared(cls, n: int, kappa: int, centroids: np.ndarray) -> "CodebookBank":
        c = np.broadcast_to(centroids, (n,) + centroids.shape).copy()
        if c.shape[1] != 1 << kappa:
            raise ValueError("centroid count must equal 2**kappa")
        return cls(kappa, c, c.copy())

    def book(self, i: int) -> Codebook:
        return Codebook(i, self.centroids[i], self.decode_map[i])


def encode_all(bank: CodebookBank, latents: np.ndarray) -> np.ndarray:
    """Each agent's own latent (n, d) -> its symbol (n,)."""
    d2 = ((bank.centroids - latents[:, None, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def slot_symbols(topology: Topology, symbols: np.ndarray) -> np.ndarray:
    """Per-receiver slot symbols (n, n_slots); -1 where a slot has no sender."""
    s = topology.slot_sender
    return np.where(s >= 0, symbols[np.maximum(s, 0)], -1)


def decode_slots(bank: CodebookBank, slots: np.ndarray) -> np.ndarray:
    """Receiver-side decoding of slot symbols (..., n, n_slots) -> vectors (..., n, n_slots, d)."""
    n = bank.n
    rows = np.arange(n).reshape((n, 1))
    out = bank.decode_map[rows, np.maximum(slots, 0)]
    return np.where((slots >= 0)[..., None], out, 0.0)


def route(topology: Topology, latents: np.ndarray, bank: CodebookBank):
    """Encode every sender's latent and decode into every receiver's slots.

    Returns ``(slot_symbols, messages)`` where ``messages`` is (n, n_slots, d).
    """
    syms = slot_symbols(topology, encode_all(bank, latents))
    return syms, decode_slots(bank, syms)


@dataclass(frozen=True)
class MessageFrame:
    tick: int
    edges: tuple[tuple[int, int, int], ...]

    @classmethod
    def from_slots(cls, tick: int, topology: Topology, slots: np.ndarray) -> "MessageFrame":
        edges = []
        for j in range(topology.n):
            for s, i in enumerate(topology.slot_sender[j]):
                if i >= 0:
                    edges.append((int(i), j, int(slots[j, s])))
        return cls(tick, tuple(sorted(set(edges))))


# --- channel mutual information --------------------------------------------------

@dataclass(frozen=True)
class ChannelGraph:
    tick: int
    gamma: np.ndarray
    topology: Topology

    def summary(self) -> tuple[float, float]:
        vals = [self.gamma[i, j] for i, j in self.topology.edges]
        if not vals:
            return 0.0, 0.0
        return float(np.mean(vals)), float(np.max(vals))


def channel_mi(source, reconstruction, min_samples: int = 1) -> float:
    """Plug-in I(source; reconstruction) in bits from paired discrete samples.

    Either argument may be 1D symbols or 2D rows (each row is one joint symbol).
    """
    n = len(source)
    if n < min_samples:
        raise InsufficientSamples(f"{n} samples < {min_samples} required")
    return mutual_information(source, reconstruction)


def channel_graph(tick: int, latents: np.ndarray, symbols: np.ndarray, bank: CodebookBank,
                  topology: Topology, bins: int = 4, strategy: str = "quantile",
                  min_samples: int = 256) -> ChannelGraph:
    """Gamma_ij over a window.

    ``latents`` (T, n, d) and ``symbols`` (T, n) are what each sender produced;
    reconstructions use the receivers' current decoders, so each receiver's
    reconstruction takes at most 2**kappa values and Gamma_ij <= kappa.
    """
    t = latents.shape[0]
    if t < min_samples:
        raise InsufficientSamples(f"{t} samples < {min_samples} required")
    gamma = np.zeros((topology.n, topology.n))
    src_codes = {}
    for i, j in topology.edges:
        if i not in src_codes:
            src_codes[i] = Discretizer(bins, strategy).fit_symbols(latents[:, i])
        used, inverse = np.unique(symbols[:, i], return_inverse=True)
        disc = Discretizer(bins, strategy).fit(bank.decode_map[j][symbols[:, i]])
        rec_codes = as_symbols(disc.transform(bank.decode_map[j][used]))[inverse.reshape(-1)]
        gamma[i, j] = channel_mi(src_codes[i], rec_codes, min_samples)
    return ChannelGraph(tick, gamma, topology)


# --- co-adaptation ----------------------------------------------------------------

def vq_step(centroids: np.ndarray, latents: np.ndarray, rate: float,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Move each centroid toward the mean of the latents assigned to it.

    Centroids with no assigned latent are re-seeded to a random latent from the
    window (only when ``rate > 0``).
    """
    c = centroids.copy()
    if rate == 0 or len(latents) == 0:
        return c
    assign = np.argmin(((latents[:, None, :] - c[None]) ** 2).sum(axis=2), axis=1)
    counts = np.bincount(assign, minlength=len(c))
    sums = np.zeros_like(c)
    np.add.at(sums, assign, latents)
    for k in range(len(c)):
        if counts[k]:
            c[k] += rate * (sums[k] / counts[k] - c[k])
        elif rng is not None:
            c[k] = latents[rng.integers(len(latents))]
    return c


def quantization_error(centroids: np.ndarray, latents: np.ndarray) -> float:
    d2 = ((latents[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).mean())


def decoder_gradient(bank: CodebookBank, agents: ag.AgentBank, views: np.ndarray,
                     slots: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Gradient of each receiver's mean prediction loss w.r.t. its decode_map.

    ``views`` (T, n, V), ``slots`` (T, n, S) symbols received, ``observed``
    (T, n, cells). The gradient reaches the decoder only through the message
    slots; agent parameters are treated as constants.
    """
    msgs = decode_slots(bank, slots)
    inp = ag.AgentInput(np.swapaxes(views, 0, 1), np.swapaxes(msgs, 0, 1))
    _, _, d_msgs, _ = ag.gradients(agents, inp, np.swapaxes(observed, 0, 1))
    grad = np.zeros_like(bank.decode_map)
    sl = np.swapaxes(slots, 0, 1)
    n, t, s = sl.shape
    valid = sl >= 0
    rows = np.broadcast_to(np.arange(n)[:, None, None], sl.shape)[valid]
    np.add.at(grad, (rows, sl[valid]), d_msgs[valid])
    return grad


def adapt_codebooks(bank: CodebookBank, agents: ag.AgentBank | None, latents: np.ndarray,
                    vq_rate: float, decoder_lr: float = 0.0, *, views=None, slots=None,
                    observed=None, seed: int = 0, tick: int = 0) -> CodebookBank:
    """One round of co-adaptation.

    Encoders: one online VQ step per agent on its window of latents (T, n, d).
    Decoders: one gradient step on the receivers' prediction loss over the
    recorded ``views``/``slots``/``observed`` (needed only if ``decoder_lr > 0``).
    """
    centroids = bank.centroids.copy()
    for i in range(bank.n):
        rng = substream(seed, "codebook-reseed", i, tick)
        centroids[i] = vq_step(bank.centroids[i], latents[:, i], vq_rate, rng)
    decode_map = bank.decode_map
    if decoder_lr > 0:
        if agents is None or views is None or slots is None or observed is None:
            raise ValueError("decoder update needs agents, views, slots and observed")
        decode_map = decode_map - decoder_lr * decoder_gradient(bank, agents, views, slots, observed)
    return replace(bank, centroids=centroids, decode_map=np.array(decode_map))


# --- semantic curvature --------------------------------------------------------------

def transport(bank: CodebookBank, cycle, latent: np.ndarray) -> np.ndarray:
    """Carry a latent of ``cycle[0]`` around the cycle of (decode . encode) hops."""
    v = np.asarray(latent, dtype=np.float64)
    path = list(cycle) + [cycle[0]]
    for a, b in zip(path[:-1], path[1:]):
        v = decode(bank.book(b), encode(bank.book(a), v))
    return v


def curvature(bank: CodebookBank, topology: Topology | None, cycle, samples,
              eps: float = 1e-12) -> float:
    """Mean relative drift ||x - T(x)|| / (||x|| + eps) of latents carried around ``cycle``."""
    cycle = list(cycle)
    if len(cycle) < 2:
        raise ValueError("cycle needs at least two agents")
    if topology is not None:
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            if not topology.has_edge(a, b):
                raise ValueError(f"no edge {a} -> {b} in topology")
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    drift = [np.linalg.norm(x - transport(bank, cycle, x)) / (np.linalg.norm(x) + eps)
             for x in samples]
    return float(np.mean(drift))
