"""Walker ensembles: drift velocities, quantum diffusion, Metropolis sampling.

Each walker carries an independent, reproducible random stream derived
from (seed, walker, species, purpose); the batched engine variants draw
whole walker-axis arrays from one purpose-level stream instead, which
gives the same determinism guarantee at array speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEnsembleError, NodeError
from .grid import (NODE_EPS, Grid, GuideWave, gradient_array, interp_array,
                   interp_rows, interp_weights)

#: stable stream ids; never renumber, reproducibility depends on them
PURPOSES = {
    "init": 0,
    "metropolis": 1,
    "diffusion": 2,
    "bath_offset": 3,
    "bath_thermal": 4,
    "generic": 9,
}

_U64 = (1 << 64) - 1


@dataclass
class WalkerEnsemble:
    """Positions r_i^k, walkers along axis 0 and species along axis 1."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if pos.shape[0] < 1:
            raise ValueError("need at least one walker")
        self.positions = pos

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def n_species(self) -> int:
        return self.positions.shape[1]


def rng_stream(seed: int, walker: int | None = None, species: int | None = None,
               purpose: str = "generic") -> np.random.Generator:
    """Independent generator for a (walker, species, purpose) triple.

    Distinct triples give statistically independent streams; identical
    arguments reproduce the identical sequence.
    """
    entropy = (
        int(seed) & _U64,
        PURPOSES[purpose],
        0 if species is None else int(species) + 1,
        0 if walker is None else int(walker) + 1,
    )
    return np.random.default_rng(np.random.SeedSequence(entropy))


def drift_velocity(w: GuideWave, x: float, mass: float) -> float:
    """Bohmian velocity Im[grad(w)/w]/mass at x; errors on a node."""
    amp_x = interp_array(w.amplitude, w.grid, float(x))
    if abs(amp_x) < NODE_EPS:
        raise NodeError(f"|w({x})| = {abs(amp_x):.2e} below node threshold")
    ratio = _drift_field(w.amplitude[None, :], w.grid.dx, mass)
    return float(interp_array(ratio[0], w.grid, float(x)))


def _drift_field(amps: np.ndarray, dx: float, mass: float) -> np.ndarray:
    grad = gradient_array(amps, dx)
    safe = np.where(np.abs(amps) < NODE_EPS, 1.0, amps)
    ratio = np.where(np.abs(amps) < NODE_EPS, 0.0, grad / safe)
    return np.imag(ratio) / mass


def drift_rows(amps: np.ndarray, grid: Grid, xs: np.ndarray, mass: float,
               dt: float) -> np.ndarray:
    """Row-wise drift velocities with node protection.

    Where the interpolated amplitude is below the node threshold the
    velocity is clamped to magnitude dx/dt so a single bad step cannot
    fling the walker out of the box.
    """
    vfield = _drift_field(amps, grid.dx, mass)
    v = np.real(interp_rows(vfield, grid, xs))
    amp_at = interp_rows(amps, grid, xs)
    cap = grid.dx / dt
    node = np.abs(amp_at) < NODE_EPS
    return np.where(node, np.clip(v, -cap, cap), v)


def reflect(x, lo: float, hi: float):
    """Fold positions back into [lo, hi] by mirror reflection."""
    width = hi - lo
    y = np.mod(np.asarray(x, dtype=np.float64) - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


def diffuse(x: float, v: float, dt: float, mass: float,
            rng: np.random.Generator, lo: float, hi: float) -> float:
    """Drift-diffusion move x + v dt + eta sqrt(dt/mass), reflected at walls."""
    if dt <= 0 or mass <= 0:
        raise ValueError("dt and mass must be positive")
    eta = rng.standard_normal()
    return float(reflect(x + v * dt + eta * np.sqrt(dt / mass), lo, hi))


def diffuse_rows(xs: np.ndarray, vs: np.ndarray, dt: float, mass: float,
                 rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
    eta = rng.standard_normal(xs.shape)
    return reflect(xs + vs * dt + eta * np.sqrt(dt / mass), lo, hi)


def metropolis_resample(x: float, w: GuideWave, proposal_scale: float,
                        n_sub: int, rng: np.random.Generator) -> float:
    """n_sub Metropolis steps targeting |w|^2 with Gaussian proposals.

    Proposals landing outside the box are rejected (the target density is
    zero there); rejections keep the current position.
    """
    if proposal_scale <= 0:
        raise ValueError("proposal_scale must be positive")
    cur = float(x)
    p_cur = abs(interp_array(w.amplitude, w.grid, cur)) ** 2
    for _ in range(n_sub):
        prop = cur + proposal_scale * rng.standard_normal()
        u = rng.random()
        if not (w.grid.x_min <= prop <= w.grid.x_max):
            continue
        p_prop = abs(interp_array(w.amplitude, w.grid, prop)) ** 2
        if u * p_cur <= p_prop:
            cur, p_cur = prop, p_prop
    return cur


def metropolis_rows(amps: np.ndarray, grid: Grid, xs: np.ndarray,
                    proposal_scale: float, n_sub: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Batched Metropolis: row k of ``amps`` is walker k's own target."""
    cur = np.array(xs, dtype=np.float64)
    p_cur = np.abs(interp_rows(amps, grid, cur)) ** 2
    for _ in range(n_sub):
        prop = cur + proposal_scale * rng.standard_normal(cur.shape)
        u = rng.random(cur.shape)
        inside = (prop >= grid.x_min) & (prop <= grid.x_max)
        safe = np.where(inside, prop, cur)
        p_prop = np.where(inside, np.abs(interp_rows(amps, grid, safe)) ** 2, 0.0)
        accept = u * p_cur <= p_prop
        cur = np.where(accept, safe, cur)
        p_cur = np.where(accept, p_prop, p_cur)
    return cur


def ensemble_stats(positions) -> tuple[float, float]:
    """Sample mean and (n-1)-denominator standard deviation."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size < 2:
        raise DegenerateEnsembleError(
            f"ensemble statistics need >= 2 walkers, got {pos.size}")
    return float(np.mean(pos)), float(np.std(pos, ddof=1))
