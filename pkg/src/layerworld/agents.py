"""Per-region predictive agents.

Each agent owns an R x R tile of the substrate, sees that tile plus a halo,
reads decoded message vectors from its in-neighbours, and outputs a per-cell
probability that the cell is live at the next tick. Agents are stored as a
bank with a leading agent axis on every parameter so the whole population
runs as batched matrix products; a single agent is a bank of size one.

Network (``arch="mlp"``)::

    x = [view, messages]           (view cells, then slot-major message vectors)
    h1 = tanh(x W1 + b1)
    latent = tanh(h1 W2 + b2)      (the communicated internal state)
    logits = latent W3 + b3
    probs = clamp(sigmoid(logits), eps, 1 - eps)

With ``arch="attention"`` the raw view is first replaced by the mean output
of one single-head self-attention block over per-cell embeddings
``value * u + position``; everything downstream is unchanged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .rng import substream

log = logging.getLogger(__name__)

EPS_CLAMP = 1e-6



@dataclass(frozen=True)
class Arch:
    view_cells: int
    out_cells: int
    n_slots: int
    latent_dim: int = 32
    hidden: int = 32
    attention: bool = False
    embed_dim: int = 8

    @property
    def msg_width(self) -> int:
        return self.n_slots * self.latent_dim

    @property
    def front_width(self) -> int:
        return self.embed_dim if self.attention else self.view_cells

    @property
    def input_width(self) -> int:
        return self.front_width + self.msg_width

    def shapes(self) -> dict[str, tuple[int, ...]]:
        s = {}
        if self.attention:
            m = self.embed_dim
            s.update(U=(m,), P=(self.view_cells, m), Wq=(m, m), Wk=(m, m), Wv=(m, m))
        s.update(W1=(self.input_width, self.hidden), b1=(self.hidden,),
                 W2=(self.hidden, self.latent_dim), b2=(self.latent_dim,),
                 W3=(self.latent_dim, self.out_cells), b3=(self.out_cells,))
        return s

    def describe(self) -> str:
        front = f"attn({self.view_cells}x{self.embed_dim})" if self.attention else f"{self.view_cells}"
        return (f"{front}+{self.n_slots}x{self.latent_dim}"
                f"-{self.hidden}-{self.latent_dim}-{self.out_cells}")


def _fan_in(name: str, arch: Arch) -> int:
    return {"W1": arch.input_width, "W2": arch.hidden, "W3": arch.latent_dim,
            "U": 1, "P": 1, "Wq": arch.embed_dim, "Wk": arch.embed_dim,
            "Wv": arch.embed_dim}[name]


@dataclass(frozen=True)
class AgentBank:
    """Parameters and optimizer state of ``n`` agents sharing one architecture."""

    arch: Arch
    params: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray]
    ids: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.ids)

    @classmethod
    def init(cls, arch: Arch, ids, seed: int) -> "AgentBank":
        ids = tuple(int(i) for i in ids)
        shapes = arch.shapes()
        params = {k: np.zeros((len(ids),) + s) for k, s in shapes.items()}
        for row, agent_id in enumerate(ids):
            rng = substream(seed, "agent-init", agent_id)
            for name, shape in shapes.items():
                if name.startswith("b"):
                    continue
                a = 1.0 / np.sqrt(_fan_in(name, arch))
                params[name][row] = rng.uniform(-a, a, size=shape)
        velocity = {k: np.zeros_like(v) for k, v in params.items()}
        return cls(arch, params, velocity, ids)

    @classmethod
    def zeros(cls, arch: Arch, n: int = 1) -> "AgentBank":
        params = {k: np.zeros((n,) + s) for k, s in arch.shapes().items()}
        return cls(arch, params, {k: np.zeros_like(v) for k, v in params.items()}, tuple(range(n)))

    def flat_params(self, row: int = 0) -> np.ndarray:
        return np.concatenate([self.params[k][row].ravel() for k in sorted(self.params)])

    def with_flat_params(self, flat: np.ndarray, row: int = 0) -> "AgentBank":
        params = {k: v.copy() for k, v in self.params.items()}
        pos = 0
        for k in sorted(params):
            size = params[k][row].size
            params[k][row] = flat[pos:pos + size].reshape(params[k][row].shape)
            pos += size
        return replace(self, params=params)

    def subset(self, rows) -> "AgentBank":
        rows = list(rows)
        return AgentBank(self.arch, {k: v[rows] for k, v in self.params.items()},
                         {k: v[rows] for k, v in self.velocity.items()},
                         tuple(self.ids[r] for r in rows))


@dataclass(frozen=True)
class AgentInput:
    """``view``: (n, view_cells) substrate values; ``messages``: (n, n_slots, latent_dim).

    A slot with no sender holds the zero vector.
    """

    view: np.ndarray
    messages: np.ndarray

    @classmethod
    def silent(cls, view: np.ndarray, arch: Arch) -> "AgentInput":
        view = np.asarray(view, dtype=np.float64)
        return cls(view, np.zeros(view.shape[:-1] + (arch.n_slots, arch.latent_dim)))


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    logits: np.ndarray
    latent: np.ndarray


def _check_layout(arch: Arch, view: np.ndarray, msgs: np.ndarray) -> None:
    if view.shape[-1] != arch.view_cells:
        raise ValueError(f"view has {view.shape[-1]} cells, arch expects {arch.view_cells}")
    if msgs.shape[-2:] != (arch.n_slots, arch.latent_dim):
        raise ValueError(f"messages shaped {msgs.shape[-2:]}, arch expects "
                         f"{(arch.n_slots, arch.latent_dim)}")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward(p: dict, arch: Arch, view: np.ndarray, msgs: np.ndarray) -> dict:
    """Batched forward pass. ``view`` (n, B, V), ``msgs`` (n, B, S, d)."""
    c = {"view": view}
    if arch.attention:
        m = arch.embed_dim
        emb = view[..., None] * p["U"][:, None, None, :] + p["P"][:, None, :, :]
        q = emb @ p["Wq"][:, None]
        k = emb @ p["Wk"][:, None]
        v = emb @ p["Wv"][:, None]
        s = q @ np.swapaxes(k, -1, -2) / np.sqrt(m)
        s = s - s.max(axis=-1, keepdims=True)
        a = np.exp(s)
        a /= a.sum(axis=-1, keepdims=True)
        o = a @ v
        front = o.mean(axis=2)
        c.update(emb=emb, q=q, k=k, v=v, a=a)
    else:
        front = view
    x = np.concatenate([front, msgs.reshape(msgs.shape[:2] + (-1,))], axis=-1)
    h1 = np.tanh(x @ p["W1"] + p["b1"][:, None, :])
    h2 = np.tanh(h1 @ p["W2"] + p["b2"][:, None, :])
    z = h2 @ p["W3"] + p["b3"][:, None, :]
    c.update(x=x, h1=h1, h2=h2, z=z)
    return c


def _backward(p: dict, arch: Arch, c: dict, dz: np.ndarray):
    """Returns (param grads summed over the batch, d/d view, d/d messages)."""
    g = {}
    h1, h2, x = c["h1"], c["h2"], c["x"]
    g["W3"] = np.swapaxes(h2, 1, 2) @ dz
    g["b3"] = dz.sum(axis=1)
    da2 = (dz @ np.swapaxes(p["W3"], 1, 2)) * (1.0 - h2 * h2)
    g["W2"] = np.swapaxes(h1, 1, 2) @ da2
    g["b2"] = da2.sum(axis=1)
    da1 = (da2 @ np.swapaxes(p["W2"], 1, 2)) * (1.0 - h1 * h1)
    g["W1"] = np.swapaxes(x, 1, 2) @ da1
    g["b1"] = da1.sum(axis=1)
    dx = da1 @ np.swapaxes(p["W1"], 1, 2)
    fw = arch.front_width
    d_msgs = dx[..., fw:].reshape(dx.shape[:2] + (arch.n_slots, arch.latent_dim))
    d_front = dx[..., :fw]
    if not arch.attention:
        return g, d_front, d_msgs

    m = arch.embed_dim
    view, emb, q, k, v, a = c["view"], c["emb"], c["q"], c["k"], c["v"], c["a"]
    do = np.broadcast_to(d_front[:, :, None, :] / arch.view_cells, v.shape)
    da = do @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(a, -1, -2) @ do
    ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) / np.sqrt(m)
    dq = ds @ k
    dk = np.swapaxes(ds, -1, -2) @ q
    g["Wq"] = np.einsum("nbvi,nbvj->nij", emb, dq)
    g["Wk"] = np.einsum("nbvi,nbvj->nij", emb, dk)
    g["Wv"] = np.einsum("nbvi,nbvj->nij", emb, dv)
    demb = (dq @ np.swapaxes(p["Wq"], 1, 2)[:, None]
            + dk @ np.swapaxes(p["Wk"], 1, 2)[:, None]
            + dv @ np.swapaxes(p["Wv"], 1, 2)[:, None])
    g["U"] = np.einsum("nbvm,nbv->nm", demb, view)
    g["P"] = demb.sum(axis=1)
    d_view = (demb * p["U"][:, None, None, :]).sum(axis=-1)
    return g, d_view, d_msgs


def _batched(inp: AgentInput):
    view = np.asarray(inp.view, dtype=np.float64)
    msgs = np.asarray(inp.messages, dtype=np.float64)
    if view.ndim == 2:
        return view[:, None, :], msgs[:, None], True
    return view, msgs, False


def predict(bank: AgentBank, inp: AgentInput) -> Prediction:
    """Forward pass for every agent. Inputs are (n, ...) or batched (n, B, ...)."""
    view, msgs, squeeze = _batched(inp)
    _check_layout(bank.arch, view, msgs)
    c = _forward(bank.params, bank.arch, view, msgs)
    probs = np.clip(_sigmoid(c["z"]), EPS_CLAMP, 1.0 - EPS_CLAMP)
    out = (probs, c["z"], c["h2"])
    if squeeze:
        out = tuple(a[:, 0] for a in out)
    return Prediction(*out)


def latent(bank: AgentBank, inp: AgentInput) -> np.ndarray:
    return predict(bank, inp).latent


def cell_losses(probs: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Per-cell cross-entropy in nats."""
    s = np.asarray(observed, dtype=np.float64)
    if probs.shape != s.shape:
        raise ValueError(f"prediction shape {probs.shape} != observation shape {s.shape}")
    p = np.clip(probs, EPS_CLAMP, 1.0 - EPS_CLAMP)
    return -(s * np.log(p) + (1.0 - s) * np.log(1.0 - p))


def loss(pred: Prediction | np.ndarray, observed) -> np.ndarray | float:
    """Mean per-cell cross-entropy (nats) over the last axis (and batch, if any).

    Returns one value per agent for bank-shaped input, a float for a 1D array.
    """
    probs = pred.probs if isinstance(pred, Prediction) else np.asarray(pred, dtype=np.float64)
    cl = cell_losses(probs, observed)
    if cl.ndim == 1:
        return float(cl.mean())
    return cl.reshape(cl.shape[0], -1).mean(axis=1)


def _loss_grad_logits(z: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """d(mean loss)/d logits, exact for the clamped probabilities."""
    raw = _sigmoid(z)
    active = (raw > EPS_CLAMP) & (raw < 1.0 - EPS_CLAMP)
    n_terms = z.shape[1] * z.shape[2]
    return np.where(active, raw - observed, 0.0) / n_terms


def gradients(bank: AgentBank, inp: AgentInput, observed: np.ndarray):
    """Loss gradients: (param grads, d loss/d view, d loss/d messages, per-agent loss)."""
    view, msgs, squeeze = _batched(inp)
    _check_layout(bank.arch, view, msgs)
    obs = np.asarray(observed, dtype=np.float64)
    if squeeze:
        obs = obs[:, None, :]
    c = _forward(bank.params, bank.arch, view, msgs)
    probs = np.clip(_sigmoid(c["z"]), EPS_CLAMP, 1.0 - EPS_CLAMP)
    per_agent = cell_losses(probs, obs).reshape(bank.n, -1).mean(axis=1)
    g, d_view, d_msgs = _backward(bank.params, bank.arch, c, _loss_grad_logits(c["z"], obs))
    if squeeze:
        d_view, d_msgs = d_view[:, 0], d_msgs[:, 0]
    return g, d_view, d_msgs, per_agent


def logit_input_gradients(bank: AgentBank, inp: AgentInput):
    """Gradients of each sample's mean logit w.r.t. the view and the message slots."""
    view, msgs, squeeze = _batched(inp)
    _check_layout(bank.arch, view, msgs)
    c = _forward(bank.params, bank.arch, view, msgs)
    dz = np.full_like(c["z"], 1.0 / bank.arch.out_cells)
    _, d_view, d_msgs = _backward(bank.params, bank.arch, c, dz)
    if squeeze:
        d_view, d_msgs = d_view[:, 0], d_msgs[:, 0]
    return d_view, d_msgs


@dataclass
class UpdateResult:
    bank: AgentBank
    losses: np.ndarray
    skipped: list[int] = field(default_factory=list)


def update(bank: AgentBank, inp: AgentInput, observed, lr: float,
           momentum: float = 0.0) -> UpdateResult:
    """One SGD step per agent on its own loss.

    ``losses`` are the pre-update losses. Agents whose gradient is not finite
    keep their parameters and are listed in ``skipped``.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    g, _, _, per_agent = gradients(bank, inp, observed)
    finite = np.ones(bank.n, dtype=bool)
    for v in g.values():
        finite &= np.isfinite(v).reshape(bank.n, -1).all(axis=1)
    skipped = [bank.ids[i] for i in np.flatnonzero(~finite)]
    for agent_id in skipped:
        log.warning("non-finite gradient for agent %d; update skipped", agent_id)
    params, velocity = {}, {}
    for k, p in bank.params.items():
        gk = g[k]
        if skipped:
            mask = finite.reshape((-1,) + (1,) * (p.ndim - 1))
            gk = np.where(mask, gk, 0.0)
        vel = momentum * bank.velocity[k] + gk if momentum else gk
        if skipped:
            vel = np.where(mask, vel, bank.velocity[k])
        velocity[k] = vel
        params[k] = p - lr * vel if lr else p
    return UpdateResult(replace(bank, params=params, velocity=velocity), per_agent, skipped)


# --- tiling -------------------------------------------------------------------

@dataclass(frozen=True)
class Tiling:
    """Non-overlapping ``tile`` x ``tile`` regions with a ``halo``-cell border in the view.

    Agent ``j`` owns tile ``(j % cols, j // cols)``. ``view_index`` and
    ``own_index`` hold flat (row-major) substrate indices, toroidally wrapped.
    """

    width: int
    height: int
    tile: int = 4
    halo: int = 1

    def __post_init__(self):
        if self.tile < 1 or self.halo < 0:
            raise ValueError("tile must be >= 1 and halo >= 0")
        if self.width % self.tile or self.height % self.tile:
            raise ValueError(f"{self.width}x{self.height} grid is not divisible into "
                             f"{self.tile}x{self.tile} tiles")

    @property
    def cols(self) -> int:
        return self.width // self.tile

    @property
    def rows(self) -> int:
        return self.height // self.tile

    @property
    def n_agents(self) -> int:
        return self.cols * self.rows

    @property
    def view_side(self) -> int:
        return self.tile + 2 * self.halo

    def origin(self, agent: int) -> tuple[int, int]:
        return (agent % self.cols) * self.tile, (agent // self.cols) * self.tile

    def _index(self, pad: int) -> np.ndarray:
        side = self.tile + 2 * pad
        offs = np.arange(side) - pad
        out = np.empty((self.n_agents, side * side), dtype=np.int64)
        for j in range(self.n_agents):
            x0, y0 = self.origin(j)
            ys = (y0 + offs) % self.height
            xs = (x0 + offs) % self.width
            out[j] = (ys[:, None] * self.width + xs[None, :]).ravel()
        return out

    @cached_property
    def view_index(self) -> np.ndarray:
        return self._index(self.halo)

    @cached_property
    def own_index(self) -> np.ndarray:
        return self._index(0)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Tile cells whose Moore neighbourhood reaches outside the tile."""
        r = np.arange(self.tile)
        edge = (r == 0) | (r == self.tile - 1)
        return (edge[:, None] | edge[None, :]).ravel()
