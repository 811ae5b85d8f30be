"""Continuous lattice variant: overdamped Langevin dynamics under a potential
and the path-wise entropy production of the resulting trajectories.

Update (Euler-Maruyama)::

    x[t+1] = x[t] - eta * grad U(x[t]) + sqrt(2 * eta / beta) * noise

The entropy production of a trajectory is the log-ratio of forward and
reversed transition densities, in units of k_B (k_B = 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import substream

KINDS = ("quadratic", "double_well", "coupled_lattice", "constant")


@dataclass(frozen=True)
class FieldState:
    values: np.ndarray
    tick: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v.ravel()))[0])
            raise ValueError(f"non-finite field value at site {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class PotentialSpec:
    """Separable or nearest-neighbour-coupled potential.

    * ``quadratic``: ``U = stiffness/2 * sum x^2``
    * ``double_well``: ``U = height * sum (x^2 - 1)^2``
    * ``coupled_lattice``: double well on every site plus
      ``coupling/2 * sum (x_i - x_j)^2`` over periodic nearest-neighbour pairs
      along every axis of the field
    * ``constant``: ``U = 0``
    """

    kind: str = "double_well"
    stiffness: float = 1.0
    height: float = 1.0
    coupling: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")

    def energy(self, x: np.ndarray) -> float:
        return float(self.site_energy(x).sum() + self._coupling_energy(x))

    def site_energy(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "quadratic":
            return 0.5 * self.stiffness * x * x
        if self.kind in ("double_well", "coupled_lattice"):
            return self.height * (x * x - 1.0) ** 2
        return np.zeros_like(x)

    def _coupling_energy(self, x: np.ndarray) -> float:
        if self.kind != "coupled_lattice" or self.coupling == 0.0:
            return 0.0
        x = np.asarray(x, dtype=np.float64)
        total = 0.0
        for axis in range(x.ndim):
            if x.shape[axis] < 2:
                continue
            total += float(((x - np.roll(x, -1, axis=axis)) ** 2).sum())
        return 0.5 * self.coupling * total

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "quadratic":
            return self.stiffness * x
        if self.kind == "constant":
            return np.zeros_like(x)
        g = 4.0 * self.height * x * (x * x - 1.0)
        if self.kind == "coupled_lattice" and self.coupling != 0.0:
            for axis in range(x.ndim):
                if x.shape[axis] < 2:
                    continue
                g = g + self.coupling * (2 * x - np.roll(x, -1, axis=axis) - np.roll(x, 1, axis=axis))
        return g


@dataclass(frozen=True)
class LangevinParams:
    eta: float
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        # eta == 0 is the degenerate identity step; entropy production rejects it
        if not (self.eta >= 0 and self.beta > 0):
            raise ValueError("eta must be non-negative and beta strictly positive")

    @property
    def variance(self) -> float:
        return 2.0 * self.eta / self.beta


class NonFiniteGradient(FloatingPointError):
    def __init__(self, site: int, value: float):
        super().__init__(f"non-finite gradient {value!r} at site {site}")
        self.site = site
        self.value = value


def langevin_step(state: FieldState, pot: PotentialSpec, params: LangevinParams,
                  rng: np.random.Generator | None = None, *, noise: bool = True,
                  schedule: Callable[[int], PotentialSpec] | None = None) -> FieldState:
    """One Euler-Maruyama step.

    ``rng`` defaults to the substream keyed by ``(params.seed, tick)``.
    ``noise=False`` drops the stochastic term (test hook). ``schedule`` maps
    a tick to the potential in force at that tick, for time-dependent drives.
    """
    if schedule is not None:
        pot = schedule(state.tick)
    x = state.values
    with np.errstate(over="ignore", invalid="ignore"):
        g = pot.gradient(x)
    if not np.all(np.isfinite(g)):
        site = int(np.flatnonzero(~np.isfinite(g.ravel()))[0])
        raise NonFiniteGradient(site, float(g.ravel()[site]))
    eta = params.eta
    new = x - eta * g
    if noise and eta > 0:
        if rng is None:
            rng = substream(params.seed, "langevin", 0, state.tick)
        new = new + math.sqrt(2.0 * eta / params.beta) * rng.standard_normal(x.shape)
    return FieldState(new, state.tick + 1)


def simulate(state: FieldState, pot: PotentialSpec, params: LangevinParams, steps: int,
             *, noise: bool = True) -> list[FieldState]:
    traj = [state]
    for _ in range(steps):
        traj.append(langevin_step(traj[-1], pot, params, noise=noise))
    return traj


def _log_ratio_terms(x0: np.ndarray, x1: np.ndarray, pot: PotentialSpec,
                     params: LangevinParams) -> np.ndarray:
    """Per-site ln p(x1|x0) - ln p(x0|x1) for the Euler-Maruyama Gaussian kernel."""
    eta, var = params.eta, params.variance
    fwd = x1 - (x0 - eta * pot.gradient(x0))
    bwd = x0 - (x1 - eta * pot.gradient(x1))
    return (bwd * bwd - fwd * fwd) / (2.0 * var)


def entropy_production(traj: Sequence[FieldState], pot: PotentialSpec, params: LangevinParams,
                       *, per_site: bool = False):
    """Total entropy production of a trajectory, in units of k_B.

    With ``per_site=True`` the per-site contributions are returned; their sum
    is the total. For uncoupled potentials each site is an independent
    single-variable trajectory and its entry is that trajectory's value.
    """
    if len(traj) < 2:
        raise ValueError("trajectory needs at least two states")
    if params.eta <= 0:
        raise ValueError("entropy production needs eta > 0")
    shape = traj[0].values.shape
    terms = []
    for a, b in zip(traj[:-1], traj[1:]):
        if b.values.shape != shape:
            raise ValueError(f"field shape changed from {shape} to {b.values.shape}")
        terms.append(_log_ratio_terms(a.values, b.values, pot, params).ravel())
    # fsum is correctly rounded, hence independent of summation order: reversing
    # the trajectory negates every term and so negates the sum exactly
    terms = np.array(terms)
    if per_site:
        return np.array([math.fsum(col) for col in terms.T]).reshape(shape)
    return math.fsum(terms.ravel())


def entropy_split(traj: Sequence[FieldState], pot: PotentialSpec, params: LangevinParams,
                  bins: int = 32, value_range: tuple[float, float] = (-3.0, 3.0)
                  ) -> dict[str, float]:
    """Diagnostic split of the total into internal and external parts.

    ``internal`` is the change in Shannon entropy (nats) of the histogram of
    site values over ``bins`` equal-width bins on ``value_range`` (values
    outside are clipped into the edge bins), first state to last. ``external``
    is the remainder.
    """
    total = entropy_production(traj, pot, params)

    def shannon(v):
        counts, _ = np.histogram(np.clip(v.ravel(), *value_range), bins=bins, range=value_range)
        p = counts[counts > 0] / counts.sum()
        return float(-(p * np.log(p)).sum())

    internal = shannon(traj[-1].values) - shannon(traj[0].values)
    return {"total": total, "internal": internal, "external": total - internal}


def gibbs_density(pot: PotentialSpec, beta: float, grid: np.ndarray) -> np.ndarray:
    """Normalized single-site density exp(-beta U)/Z on a uniform grid (trapezoid rule)."""
    u = pot.site_energy(grid)
    w = np.exp(-beta * (u - u.min()))
    z = np.trapezoid(w, grid)
    return w / z


def sample_gibbs(pot: PotentialSpec, beta: float, n: int, rng: np.random.Generator,
                 lo: float = -4.0, hi: float = 4.0, resolution: int = 20001) -> np.ndarray:
    """Draw single-site samples from exp(-beta U)/Z by inverse-CDF on a fine grid."""
    grid = np.linspace(lo, hi, resolution)
    dens = gibbs_density(pot, beta, grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, grid)


def write_trajectory_tsv(path, traj: Sequence[FieldState], entropy: float | None = None) -> None:
    """TSV with columns tick, site, value; optional ``#entropy_production`` footer."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tick\tsite\tvalue\n")
        for st in traj:
            for site, v in enumerate(st.values.ravel()):
                fh.write(f"{st.tick}\t{site}\t{float(v)!r}\n")
        if entropy is not None:
            fh.write(f"#entropy_production\t{float(entropy)!r}\n")


def stationary_ensemble(pot: PotentialSpec, params: LangevinParams, n: int,
                        burn_in: int | None = None) -> FieldState:
    """``n`` independent single-site starts drawn from the chain's own stationary law.

    Samples come from exp(-beta U)/Z and are then relaxed for ``burn_in`` steps
    (default ``20 / eta``) of the same discretized dynamics, which removes the
    O(eta) mismatch between the continuous Gibbs density and the stationary
    density of the Euler-Maruyama chain. Only separable potentials make sense here.
    """
    if burn_in is None:
        burn_in = int(math.ceil(20.0 / params.eta))
    x0 = sample_gibbs(pot, params.beta, n, substream(params.seed, "gibbs"))
    state = FieldState(x0)
    relax = LangevinParams(params.eta, params.beta, params.seed + 1)
    for _ in range(burn_in):
        state = langevin_step(state, pot, relax)
    return FieldState(state.values, 0)
