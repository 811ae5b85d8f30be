"""Command-line entry point.

Exit codes: 0 ok, 1 usage, 2 config, 3 runtime.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics as mt
from . import snapshot
from .comm import InsufficientSamples
from .config import ConfigError, defaults, load_config
from .rle import RLEError, load_rle
from .substrate import ElementaryRule, SubstrateState, render_plaintext, spacetime, step_life
from .topology import build_complex, coherence_index, persistence

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="layerworld", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a configured simulation")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides config and environment)")
    r.add_argument("--ticks", type=int, help="total ticks to reach (overrides config)")
    r.add_argument("--resume", help="snapshot to resume from")

    s = sub.add_parser("substrate", help="run the bare cellular automaton")
    s.add_argument("pattern", nargs="?", help="RLE pattern (Life)")
    s.add_argument("--ticks", type=int, default=1)
    s.add_argument("--render", action="store_true", help="print every frame, not just the last")
    s.add_argument("--rule", type=int, help="elementary rule number (1D mode)")
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--x", type=int, default=0, help="pattern offset")
    s.add_argument("--y", type=int, default=0, help="pattern offset")

    m = sub.add_parser("metrics", help="recompute windowed metrics from trajectory logs")
    m.add_argument("logdir")

    t = sub.add_parser("topology", help="barcode and coherence of the final window")
    t.add_argument("logdir")
    t.add_argument("--alpha", type=float, required=True,
                   help="filtration scale (negated synergy threshold, bits)")

    i = sub.add_parser("inspect", help="summarize a snapshot")
    i.add_argument("snapshot")
    return p


def cmd_run(args) -> int:
    from .run import run

    cfg = load_config(args.config)
    manifest = run(cfg, out_dir=args.out, resume=args.resume, ticks=args.ticks)
    print(f"ticks {manifest.start_tick}..{manifest.end_tick}  config {manifest.config_hash[:12]}")
    for name in manifest.files:
        print(name)
    return EXIT_OK


def cmd_substrate(args) -> int:
    out = sys.stdout
    if args.rule is not None:
        if args.pattern:
            raise UsageError("--rule runs a 1D automaton and takes no pattern")
        width = args.width or 2 * args.ticks + 1
        grid = spacetime(ElementaryRule(args.rule), width, args.ticks)
        out.write(render_plaintext(grid))
        return EXIT_OK
    if not args.pattern:
        raise UsageError("substrate needs a pattern file or --rule")
    pat = load_rle(args.pattern)
    w = args.width or max(32, pat.width)
    h = args.height or max(32, pat.height)
    state = SubstrateState.from_cells(w, h, pat.cells, (args.x, args.y))
    frames = [state]
    for _ in range(args.ticks):
        frames.append(step_life(frames[-1]))
    shown = frames if args.render else frames[-1:]
    out.write("\n".join(render_plaintext(f.cells) for f in shown))
    return EXIT_OK


def read_trajectory(logdir: Path):
    """(ticks, latents (T, n, d), symbols (T, n), target (T,)) from trajectory.tsv."""
    path = logdir / "trajectory.tsv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (enable run.log_trajectory)")
    rows: dict[int, dict[int, tuple]] = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            t, a, sym, target, lat = line.rstrip("\n").split("\t")
            rows.setdefault(int(t), {})[int(a)] = (int(sym), int(target),
                                                   [float(v) for v in lat.split(",")])
    ticks = sorted(rows)
    n = len(rows[ticks[0]])
    latents = np.array([[rows[t][a][2] for a in range(n)] for t in ticks])
    symbols = np.array([[rows[t][a][0] for a in range(n)] for t in ticks])
    target = np.array([rows[t][0][1] for t in ticks])
    return ticks, latents, symbols, target


def _logdir_config(logdir: Path):
    snaps = sorted(logdir.glob("snapshot_*.lws"))
    return snapshot.load(snaps[-1]).config if snaps else defaults()


def read_channel(logdir: Path, n: int):
    path = logdir / "channel.tsv"
    if not path.exists():
        return None
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    if not lines:
        return None
    last = max(int(ln.split("\t")[0]) for ln in lines)
    gamma = np.zeros((n, n))
    for ln in lines:
        t, i, j, g = ln.split("\t")
        if int(t) == last:
            gamma[int(i), int(j)] = float(g)
    return gamma


def cmd_metrics(args) -> int:
    logdir = Path(args.logdir)
    cfg = _logdir_config(logdir)
    m = cfg.metrics
    ticks, latents, symbols, target = read_trajectory(logdir)
    n = latents.shape[1]
    print("\t".join(["tick", "phi"] + [f"t_lag{lag}" for lag in m.lags] + ["coherence"]))
    for end in range(len(ticks)):
        if (ticks[end] + 1) % m.stride:
            continue
        lo = max(0, end + 1 - m.window)
        lat, sym, tgt = latents[lo:end + 1], symbols[lo:end + 1], target[lo:end + 1]
        row = [str(ticks[end])]
        try:
            summary = np.stack([mt.principal_components(lat[:, i], m.summary_dims)
                                for i in range(n)], axis=1)
            row.append(repr(mt.integration_phi(summary, m.bins, m.strategy, m.phi_max_agents,
                                               m.mi_min_samples)))
            for lag in m.lags:
                row.append(repr(mt.temporal_persistence(lat, lag)))
            w = mt.synergy_weights(tgt, sym, m.k_max, 2, m.mi_min_samples)
            cx = build_complex(w, vertices=range(n), k_max=m.k_max)
            row.append(repr(coherence_index(cx, m.coherence_alpha)))
        except InsufficientSamples:
            row = [str(ticks[end])] + [mt.NA] * (len(m.lags) + 2)
        print("\t".join(row))
    return EXIT_OK


def cmd_topology(args) -> int:
    logdir = Path(args.logdir)
    cfg = _logdir_config(logdir)
    m = cfg.metrics
    _, latents, symbols, target = read_trajectory(logdir)
    n = symbols.shape[1]
    gamma = read_channel(logdir, n)
    sym, tgt = symbols[-m.window:], target[-m.window:]
    min_size = 3 if gamma is not None and m.edge_weight == "gamma" else 2
    w = mt.synergy_weights(tgt, sym, m.k_max, min_size)
    cx = build_complex(w, gamma, vertices=range(n), k_max=m.k_max)
    bc = persistence(cx)
    sys.stdout.write(bc.to_tsv())
    print(f"coherence\t{coherence_index(cx, args.alpha, bc)!r}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    world = snapshot.load(args.snapshot)
    cfg = world.config
    recent = world.history[-64:]
    print(f"tick            {world.tick}")
    print(f"substrate       {world.substrate.width}x{world.substrate.height} life, "
          f"population {world.substrate.population()}")
    print(f"agents          {world.agents.n} ({world.agents.arch.describe()}), "
          f"tile {cfg.agents.tile}, halo {cfg.agents.halo}")
    print(f"communication   {cfg.comm.topology if cfg.agents.messages else 'disabled'}, "
          f"kappa {world.books.kappa}, {len(world.topology.edges)} edges")
    if recent:
        print(f"mean loss       {float(np.mean([r.loss.mean() for r in recent]))!r} "
              f"(last {len(recent)} ticks)")
    print(f"skipped updates {world.skipped_updates}")
    print(f"config hash     {cfg.hash()}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "substrate": cmd_substrate, "metrics": cmd_metrics,
            "topology": cmd_topology, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"layerworld: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"layerworld: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RLEError, snapshot.SnapshotError, ValueError, RuntimeError) as exc:
        print(f"layerworld: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
