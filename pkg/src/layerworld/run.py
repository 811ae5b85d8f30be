"""Run loop: ticks, windowed metrics, TSV logs, snapshots and the run manifest.

Output directory contents:

``sim.tsv``
    tick, population, loss_mean, loss_boundary, loss_interior, skipped_updates
``metrics.tsv``
    one MetricsRecord per metrics tick (see ``metrics.MetricsRecord.header``)
``channel.tsv``
    tick, from, to, gamma_bits
``trajectory.tsv``
    tick, agent, symbol, target, latent (comma-separated), when enabled
``snapshot_<tick>.lws``
    world snapshots; ``manifest.json`` is written last, atomically.

Rows are stamped with the tick whose record they describe. Resuming from a
snapshot truncates every log to rows at or before the snapshot tick and then
appends, so a resumed run reproduces an uninterrupted one byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import agents as ag
from . import comm
from . import metrics as mt
from . import snapshot
from .config import SimConfig
from .rng import substream
from .topology import build_complex, coherence_index, persistence
from .world import World, new_world, tick

log = logging.getLogger(__name__)

OUTPUT_ENV = "LAYERWORLD_OUTPUT_DIR"

SIM_HEADER = ["tick", "population", "loss_mean", "loss_boundary", "loss_interior",
              "skipped_updates"]
CHANNEL_HEADER = ["tick", "from", "to", "gamma_bits"]
TRAJ_HEADER = ["tick", "agent", "symbol", "target", "latent"]


class TickError(RuntimeError):
    pass


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seed: int
    start_tick: int
    end_tick: int
    files: dict[str, dict] = field(default_factory=dict)
    metric_columns: list[str] = field(default_factory=list)
    partial: bool = False
    error: str | None = None

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        tmp = out / "manifest.json.tmp"
        tmp.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path


def _f(v: float) -> str:
    return repr(float(v))


class _Log:
    """Append-only TSV with a fixed header; reopening truncates rows past a tick."""

    def __init__(self, path: Path, header: list[str], resume_tick: int | None):
        self.path = path
        if resume_tick is None or not path.exists():
            path.write_text("\t".join(header) + "\n", encoding="utf-8")
        else:
            kept = []
            with open(path, encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if i == 0 or int(line.split("\t", 1)[0]) <= resume_tick:
                        kept.append(line)
            path.write_text("".join(kept), encoding="utf-8")
        self.fh = open(path, "a", encoding="utf-8")

    def write(self, *fields) -> None:
        self.fh.write("\t".join(str(f) for f in fields) + "\n")

    def close(self) -> None:
        self.fh.close()


def compute_metrics(world: World) -> tuple[mt.MetricsRecord, comm.ChannelGraph | None]:
    """All windowed metrics for the world's current tick."""
    cfg = world.config
    m = cfg.metrics
    hist = world.history[-m.window:]
    last = world.history[-1]
    rec = mt.MetricsRecord(tick=last.tick)
    recent = world.history[-m.stride:]
    rec.per_agent_loss = np.mean([r.loss for r in recent], axis=0).tolist()
    if len(hist) < m.mi_min_samples:
        return rec, None

    latents = np.stack([r.latent for r in hist])                 # (T, n, d)
    symbols = np.stack([r.symbols for r in hist])                # (T, n)
    n = latents.shape[1]
    summary = np.stack([mt.principal_components(latents[:, i], m.summary_dims)
                        for i in range(n)], axis=1)
    rec.phi = mt.integration_phi(summary, m.bins, m.strategy, m.phi_max_agents, m.mi_min_samples)
    for lag in m.lags:
        try:
            rec.t_persistence[lag] = mt.temporal_persistence(latents, lag)
        except comm.InsufficientSamples:
            rec.t_persistence[lag] = mt.NA

    batch = world.history[-m.r_batch:]
    views = np.stack([r.view for r in batch], axis=1).astype(np.float64)
    slots = np.stack([r.slots for r in batch], axis=1)
    msgs = comm.decode_slots(world.books, np.swapaxes(slots, 0, 1))
    rec.r_mean = float(mt.reflexivity_r(world.agents,
                                        ag.AgentInput(views, np.swapaxes(msgs, 0, 1))).mean())

    edges = world.topology.edges
    if edges and m.efficacy_edges:
        rng = substream(cfg.run.seed, "efficacy-edges", 0, world.tick)
        pick = rng.choice(len(edges), size=min(m.efficacy_edges, len(edges)), replace=False)
        rec.e_efficacy = float(np.mean([mt.causal_efficacy(world, edges[k], m.efficacy_horizon)
                                        for k in sorted(pick)]))
    elif not edges:
        rec.e_efficacy = 0.0

    graph = None
    if edges:
        graph = comm.channel_graph(last.tick, latents, symbols, world.books, world.topology,
                                   m.bins, m.strategy, m.mi_min_samples)
        rec.gamma_mean, rec.gamma_max = graph.summary()

    target = np.array([r.target for r in hist])
    min_size = 3 if m.edge_weight == "gamma" and graph is not None else 2
    weights = mt.synergy_weights(target, symbols, m.k_max, min_size, m.mi_min_samples)
    cx = build_complex(weights, graph.gamma if graph is not None else None,
                       vertices=range(n), k_max=m.k_max)
    rec.coherence = coherence_index(cx, m.coherence_alpha, persistence(cx))
    return rec, graph


def _inventory(out: Path) -> dict[str, dict]:
    files = {}
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name != "manifest.json" and not p.name.endswith(".tmp"):
            files[p.name] = {"bytes": p.stat().st_size,
                             "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
    return files


def output_dir(cfg: SimConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.run.output_dir)


def run(cfg: SimConfig, out_dir=None, resume=None, ticks: int | None = None) -> RunManifest:
    """Run to ``ticks`` (default ``cfg.run.ticks``) total ticks.

    ``resume`` is a snapshot path; its config must hash equal to ``cfg``.
    """
    out = output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    end = cfg.run.ticks if ticks is None else ticks
    if resume is not None:
        world = snapshot.load(resume)
        if world.config.hash() != cfg.hash():
            raise ValueError(f"snapshot {resume} was taken under a different config")
        world = World(cfg, *[getattr(world, f) for f in
                             ("substrate", "tiling", "topology", "agents", "books", "pending",
                              "history", "skipped_updates")])
        resume_tick = world.tick - 1
    else:
        world = new_world(cfg)
        resume_tick = None
    start = world.tick
    m = cfg.metrics
    manifest = RunManifest(cfg.hash(), __version__, cfg.run.seed, start, start,
                           metric_columns=mt.MetricsRecord.header(m.lags) if m.enabled else [])

    logs = {"sim": _Log(out / "sim.tsv", SIM_HEADER, resume_tick)}
    if m.enabled:
        logs["metrics"] = _Log(out / "metrics.tsv", mt.MetricsRecord.header(m.lags), resume_tick)
        logs["channel"] = _Log(out / "channel.tsv", CHANNEL_HEADER, resume_tick)
    if cfg.run.log_trajectory:
        logs["traj"] = _Log(out / "trajectory.tsv", TRAJ_HEADER, resume_tick)

    try:
        while world.tick < end:
            try:
                world = tick(world)
            except Exception as exc:
                raise TickError(f"tick {world.tick} failed: {exc}") from exc
            r = world.history[-1]
            logs["sim"].write(r.tick, int(r.target), _f(r.loss.mean()), _f(r.loss_boundary.mean()),
                              _f(r.loss_interior.mean()), world.skipped_updates)
            if "traj" in logs:
                for i in range(len(r.symbols)):
                    logs["traj"].write(r.tick, i, int(r.symbols[i]), r.target,
                                       ",".join(_f(v) for v in r.latent[i]))
            if m.enabled and (r.tick + 1) % m.stride == 0:
                rec, graph = compute_metrics(world)
                logs["metrics"].write(*rec.row(m.lags))
                if graph is not None:
                    for i, j in graph.topology.edges:
                        logs["channel"].write(r.tick, i, j, _f(graph.gamma[i, j]))
            period = cfg.run.snapshot_period
            if period and world.tick % period == 0:
                snapshot.save(world, out / f"snapshot_{world.tick:08d}.lws")
        snapshot.save(world, out / f"snapshot_{world.tick:08d}.lws")
    except Exception as exc:
        manifest.partial = True
        manifest.error = str(exc)
        raise
    finally:
        for lg in logs.values():
            lg.close()
        manifest.end_tick = world.tick
        manifest.files = _inventory(out)
        manifest.write(out)
    return manifest
