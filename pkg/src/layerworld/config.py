"""Run configuration.

Format: ``[section]`` headers followed by ``key = value`` lines; ``#`` starts
a comment. Every key is typed and validated; unknown sections or keys,
duplicates and bad values are rejected with the offending line number.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _int_list(s: str) -> tuple[int, ...]:
    items = [p.strip() for p in s.split(",") if p.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(int(p) for p in items)


def _choice(*options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


def _positive(kind):
    def parse(s: str):
        v = kind(s)
        if v <= 0:
            raise ValueError(f"must be > 0, got {s}")
        return v
    return parse


def _non_negative(kind):
    def parse(s: str):
        v = kind(s)
        if v < 0:
            raise ValueError(f"must be >= 0, got {s}")
        return v
    return parse


def _unit(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"must be in [0, 1], got {s}")
    return v


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "substrate": {
        "kind": (_choice("life"), "life"),
        "width": (_positive(int), 16),
        "height": (_positive(int), 16),
        "init": (_choice("random", "pattern", "gliders", "blocks", "empty"), "random"),
        "density": (_unit, 0.35),
        "pattern": (str, ""),
        "pattern_x": (int, 0),
        "pattern_y": (int, 0),
        "spacing": (_positive(int), 8),
    },
    "agents": {
        "tile": (_positive(int), 4),
        "halo": (_non_negative(int), 1),
        "arch": (_choice("mlp", "attention"), "mlp"),
        "hidden": (_positive(int), 32),
        "latent_dim": (_positive(int), 32),
        "embed_dim": (_positive(int), 8),
        "lr": (_non_negative(float), 0.05),
        "momentum": (_unit, 0.0),
        "messages": (_bool, True),
    },
    "comm": {
        "topology": (_choice("grid", "ring", "full", "none"), "grid"),
        "kappa": (_positive(int), 4),
        "vq_rate": (_unit, 0.1),
        "decoder_lr": (_non_negative(float), 0.05),
        "codebook_period": (_positive(int), 16),
    },
    "metrics": {
        "enabled": (_bool, True),
        "window": (_positive(int), 512),
        "stride": (_positive(int), 64),
        "bins": (_positive(int), 4),
        "strategy": (_choice("quantile", "uniform"), "quantile"),
        "lags": (_int_list, (1, 8)),
        "k_max": (_positive(int), 3),
        "phi_max_agents": (_positive(int), 8),
        "mi_min_samples": (_positive(int), 256),
        "summary_dims": (_positive(int), 2),
        "efficacy_horizon": (_non_negative(int), 2),
        "efficacy_edges": (_non_negative(int), 4),
        "r_batch": (_positive(int), 64),
        "edge_weight": (_choice("gamma", "synergy"), "gamma"),
        "coherence_alpha": (float, -0.05),
    },
    "run": {
        "ticks": (_non_negative(int), 1000),
        "seed": (_non_negative(int), 0),
        "snapshot_period": (_non_negative(int), 0),
        "output_dir": (str, "out"),
        "log_trajectory": (_bool, False),
    },
}


@dataclass(frozen=True)
class SimConfig:
    values: dict[str, dict] = field(default_factory=dict)
    source: str | None = None

    def __getattr__(self, section: str):
        values = object.__getattribute__(self, "values")
        if section in values:
            return _Section(values[section])
        raise AttributeError(section)

    def canonical(self) -> str:
        """Normalized text form; equal configs give equal text."""
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                lines.append(f"{key} = {_format(self.values[section][key])}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def replace(self, **sections) -> "SimConfig":
        """Copy with overrides, e.g. ``cfg.replace(run={"ticks": 10})``."""
        values = {s: dict(v) for s, v in self.values.items()}
        for section, updates in sections.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, val in updates.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[section][key] = val
        cfg = SimConfig(values, self.source)
        validate(cfg)
        return cfg


class _Section:
    def __init__(self, values: dict):
        self.__dict__.update(values)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def defaults() -> SimConfig:
    return SimConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def parse_config(text: str, path: str | None = None) -> SimConfig:
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    seen: set[tuple[str, str]] = set()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", path, lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", path, lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", path, lineno)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", path, lineno)
        seen.add((section, key))
        parser = SCHEMA[section][key][0]
        try:
            values[section][key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}", path, lineno) from None
    cfg = SimConfig(values, path)
    validate(cfg)
    return cfg


def load_config(path) -> SimConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config file not found", str(p)) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_config(text, str(p))


def validate(cfg: SimConfig) -> None:
    s, a, m = cfg.values["substrate"], cfg.values["agents"], cfg.values["metrics"]
    src = cfg.source
    if s["width"] % a["tile"] or s["height"] % a["tile"]:
        raise ConfigError(f"substrate {s['width']}x{s['height']} is not divisible by "
                          f"tile {a['tile']}", src)
    if s["init"] == "pattern" and not s["pattern"]:
        raise ConfigError("init = pattern needs a pattern path", src)
    if m["k_max"] < 2:
        raise ConfigError("k_max must be >= 2", src)
    if m["bins"] < 2:
        raise ConfigError("bins must be >= 2", src)
    if m["mi_min_samples"] > m["window"]:
        raise ConfigError("mi_min_samples cannot exceed window", src)
    if any(lag < 0 for lag in m["lags"]):
        raise ConfigError("lags must be >= 0", src)
