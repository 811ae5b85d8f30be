"""Single-file world snapshots.

Layout: a first line ``LAYERWORLD-SNAPSHOT <version>`` followed by one JSON
document with sorted keys. Arrays are stored as ``{"dtype", "shape", "b64"}``
with little-endian raw bytes, so save -> load -> save reproduces the file
byte for byte.
"""
from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import numpy as np

from . import agents as ag
from . import comm
from .config import parse_config
from .substrate import SubstrateState
from .world import TickRecord, World, build_topology

MAGIC = "LAYERWORLD-SNAPSHOT"
VERSION = 1


class SnapshotError(ValueError):
    pass


def _enc(a) -> dict:
    a = np.ascontiguousarray(a)
    dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
    return {"dtype": dt.str, "shape": list(a.shape),
            "b64": base64.b64encode(a.astype(dt).tobytes()).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(d["b64"]), dtype=np.dtype(d["dtype"]))
    return a.reshape(d["shape"]).copy()


_RECORD_ARRAYS = ("view", "slots", "observed", "latent", "symbols", "loss",
                  "loss_boundary", "loss_interior")


def world_to_dict(world: World) -> dict:
    bank = world.agents
    return {
        "config": world.config.canonical(),
        "config_source": world.config.source,
        "tick": world.tick,
        "cells": _enc(world.substrate.cells),
        "agents": {
            "arch": bank.arch.describe(),
            "ids": list(bank.ids),
            "params": {k: _enc(v) for k, v in bank.params.items()},
            "velocity": {k: _enc(v) for k, v in bank.velocity.items()},
        },
        "codebooks": {"kappa": world.books.kappa,
                      "centroids": _enc(world.books.centroids),
                      "decode_map": _enc(world.books.decode_map)},
        "pending": _enc(world.pending),
        "skipped_updates": world.skipped_updates,
        "history": [
            dict({k: _enc(getattr(r, k)) for k in _RECORD_ARRAYS}, tick=r.tick, target=r.target)
            for r in world.history
        ],
    }


def dumps(world: World) -> str:
    return f"{MAGIC} {VERSION}\n" + json.dumps(world_to_dict(world), sort_keys=True,
                                                separators=(",", ":")) + "\n"


def save(world: World, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(world), encoding="utf-8")
    os.replace(tmp, path)
    return path


def loads(text: str) -> World:
    head, _, body = text.partition("\n")
    parts = head.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise SnapshotError("not a layerworld snapshot")
    if int(parts[1]) != VERSION:
        raise SnapshotError(f"unsupported snapshot version {parts[1]}")
    d = json.loads(body)
    cfg = parse_config(d["config"])
    cfg = type(cfg)(cfg.values, d.get("config_source"))
    from .world import make_arch

    tiling = ag.Tiling(cfg.substrate.width, cfg.substrate.height, cfg.agents.tile, cfg.agents.halo)
    topo = build_topology(cfg, tiling)
    arch = make_arch(cfg, tiling, topo.n_slots)
    if arch.describe() != d["agents"]["arch"]:
        raise SnapshotError("architecture in snapshot does not match its config")
    bank = ag.AgentBank(arch,
                        {k: _dec(v) for k, v in d["agents"]["params"].items()},
                        {k: _dec(v) for k, v in d["agents"]["velocity"].items()},
                        tuple(d["agents"]["ids"]))
    books = comm.CodebookBank(d["codebooks"]["kappa"], _dec(d["codebooks"]["centroids"]),
                              _dec(d["codebooks"]["decode_map"]))
    history = tuple(
        TickRecord(tick=r["tick"], target=r["target"], **{k: _dec(r[k]) for k in _RECORD_ARRAYS})
        for r in d["history"])
    return World(cfg, SubstrateState(_dec(d["cells"]), d["tick"]), tiling, topo, bank, books,
                 _dec(d["pending"]), history, d["skipped_updates"])


def load(path) -> World:
    path = Path(path)
    try:
        return loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SnapshotError(f"snapshot not found: {path}") from None
