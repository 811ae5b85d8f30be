"""The coupled world: substrate, agents, codebooks and in-flight messages, and
the tick that advances them.

Phase order inside one tick:

1. agents predict t+1 from their substrate view and the decoded messages
   that were encoded at t-1;
2. the substrate steps by its own rule;
3. per-cell losses are scored and every agent takes one SGD step;
4. the latents from phase 1 are encoded and routed, to be read at t+1;
5. every ``codebook_period`` ticks, codebooks co-adapt;
6. the tick record joins the sliding window.

A tick never mutates its input; a failing tick leaves the old world intact.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import agents as ag
from . import comm
from .config import ConfigError, SimConfig
from .rle import load_rle
from .rng import substream
from .substrate import SubstrateState, life_rule

log = logging.getLogger(__name__)

GLIDER = ((1, 0), (2, 1), (0, 2), (1, 2), (2, 2))
BLOCK = ((0, 0), (1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class TickRecord:
    """What one tick produced; the sliding windows are tuples of these."""

    tick: int
    view: np.ndarray        # (n, V) uint8, substrate view at t
    slots: np.ndarray       # (n, S) symbols read at t (-1 = empty)
    observed: np.ndarray    # (n, cells) uint8, tile at t+1
    latent: np.ndarray      # (n, d) latent at t
    symbols: np.ndarray     # (n,) symbol each agent sent at t
    loss: np.ndarray        # (n,) mean cell loss
    loss_boundary: np.ndarray
    loss_interior: np.ndarray
    target: int             # live cells at t+1


@dataclass(frozen=True)
class World:
    config: SimConfig
    substrate: SubstrateState
    tiling: ag.Tiling
    topology: comm.Topology
    agents: ag.AgentBank
    books: comm.CodebookBank
    pending: np.ndarray
    history: tuple[TickRecord, ...] = ()
    skipped_updates: int = 0

    @property
    def tick(self) -> int:
        return self.substrate.tick

    @property
    def history_limit(self) -> int:
        m = self.config.metrics
        return max(m.window, m.r_batch, self.config.comm.codebook_period) if m.enabled \
            else self.config.comm.codebook_period


def initial_cells(cfg: SimConfig) -> np.ndarray:
    s = cfg.substrate
    w, h = s.width, s.height
    if s.init == "empty":
        return np.zeros((h, w), dtype=np.uint8)
    if s.init == "random":
        rng = substream(cfg.run.seed, "substrate-init")
        return (rng.random((h, w)) < s.density).astype(np.uint8)
    if s.init == "pattern":
        path = Path(s.pattern)
        if not path.is_absolute() and cfg.source:
            path = Path(cfg.source).parent / path
        if not path.exists():
            raise ConfigError("pattern file not found", str(path))
        pat = load_rle(path)
        return SubstrateState.from_cells(w, h, pat.cells, (s.pattern_x, s.pattern_y)).cells.copy()
    shape = GLIDER if s.init == "gliders" else BLOCK
    live = [(x + gx, y + gy)
            for gy in range(0, h, s.spacing) for gx in range(0, w, s.spacing)
            for x, y in shape]
    return SubstrateState.from_cells(w, h, live, (s.pattern_x, s.pattern_y)).cells.copy()


def build_topology(cfg: SimConfig, tiling: ag.Tiling) -> comm.Topology:
    topo = comm.Topology.build(cfg.comm.topology, tiling.cols, tiling.rows)
    if not cfg.agents.messages:
        return comm.Topology.empty(topo.n, topo.n_slots)
    return topo


def make_arch(cfg: SimConfig, tiling: ag.Tiling, n_slots: int) -> ag.Arch:
    a = cfg.agents
    return ag.Arch(view_cells=tiling.view_side ** 2, out_cells=tiling.tile ** 2,
                   n_slots=n_slots, latent_dim=a.latent_dim, hidden=a.hidden,
                   attention=a.arch == "attention", embed_dim=a.embed_dim)


def new_world(cfg: SimConfig) -> World:
    s = cfg.substrate
    tiling = ag.Tiling(s.width, s.height, cfg.agents.tile, cfg.agents.halo)
    topo = build_topology(cfg, tiling)
    arch = make_arch(cfg, tiling, topo.n_slots)
    bank = ag.AgentBank.init(arch, range(tiling.n_agents), cfg.run.seed)
    books = comm.CodebookBank.init(tiling.n_agents, cfg.comm.kappa, arch.latent_dim, cfg.run.seed)
    pending = np.full((tiling.n_agents, topo.n_slots), -1, dtype=np.int64)
    return World(cfg, SubstrateState(initial_cells(cfg), 0), tiling, topo, bank, books, pending)


def agent_input(world: World, cells: np.ndarray | None = None, pending=None) -> ag.AgentInput:
    cells = world.substrate.cells if cells is None else cells
    pending = world.pending if pending is None else pending
    view = cells.ravel()[world.tiling.view_index].astype(np.float64)
    return ag.AgentInput(view, comm.decode_slots(world.books, pending))


def tick(world: World, learn: bool = True) -> World:
    """Advance one tick. With ``learn=False`` agents and codebooks stay frozen
    and no record is kept (used for counterfactual rollouts)."""
    cfg = world.config
    tiling = world.tiling
    inp = agent_input(world)
    pred = ag.predict(world.agents, inp)

    cells = life_rule(world.substrate.cells)
    substrate = SubstrateState(cells, world.tick + 1)
    symbols = comm.encode_all(world.books, pred.latent)
    pending = comm.slot_symbols(world.topology, symbols)
    if not learn:
        return replace(world, substrate=substrate, pending=pending)

    observed = cells.ravel()[tiling.own_index]
    cell_loss = ag.cell_losses(pred.probs, observed)
    result = ag.update(world.agents, inp, observed, cfg.agents.lr, cfg.agents.momentum)
    bmask = tiling.boundary_mask
    record = TickRecord(
        tick=world.tick,
        view=inp.view.astype(np.uint8),
        slots=world.pending,
        observed=observed,
        latent=pred.latent,
        symbols=symbols,
        loss=cell_loss.mean(axis=1),
        loss_boundary=cell_loss[:, bmask].mean(axis=1) if bmask.any() else np.zeros(tiling.n_agents),
        loss_interior=cell_loss[:, ~bmask].mean(axis=1) if (~bmask).any() else np.zeros(tiling.n_agents),
        target=int(cells.sum()),
    )
    history = (world.history + (record,))[-world.history_limit:]
    books = world.books
    c = cfg.comm
    if cfg.agents.messages and (world.tick + 1) % c.codebook_period == 0:
        recent = history[-c.codebook_period:]
        books = comm.adapt_codebooks(
            books, result.bank,
            np.stack([r.latent for r in recent]), c.vq_rate, c.decoder_lr,
            views=np.stack([r.view for r in recent]).astype(np.float64),
            slots=np.stack([r.slots for r in recent]),
            observed=np.stack([r.observed for r in recent]).astype(np.float64),
            seed=cfg.run.seed, tick=world.tick)
    return replace(world, substrate=substrate, agents=result.bank, books=books,
                   pending=pending, history=history,
                   skipped_updates=world.skipped_updates + len(result.skipped))


def rollout(world: World, horizon: int) -> np.ndarray:
    """Predictions (n, cells) after ``horizon`` frozen ticks."""
    for _ in range(horizon):
        world = tick(world, learn=False)
    return ag.predict(world.agents, agent_input(world)).probs


def intervene(world: World, edge: tuple[int, int], symbol: int | None = None) -> World:
    """Copy of ``world`` with the pending symbol on ``edge`` replaced.

    Without ``symbol``, a uniform draw from the substream keyed by the edge and tick.
    """
    i, j = edge
    if symbol is None:
        rng = substream(world.config.run.seed, "intervene", i * world.topology.n + j, world.tick)
        symbol = int(rng.integers(world.books.alphabet_size))
    pending = world.pending.copy()
    hit = world.topology.slot_sender[j] == i
    if not hit.any():
        raise ValueError(f"no edge {i} -> {j}")
    pending[j, hit] = symbol
    return replace(world, pending=pending)
