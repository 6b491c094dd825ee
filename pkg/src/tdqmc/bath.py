"""Thermal bath of harmonic oscillators bilinearly coupled to the system.

Because the coupling is linear in the oscillator coordinate, a coherent
state stays coherent: the default ``gaussian`` engine therefore evolves
only the centroid pair (X, P) per oscillator replica, exactly, at O(1)
cost per oscillator.  A ``grid`` engine propagates the same oscillators
as wavefunctions on their own meshes and exists to cross-validate the
gaussian fast path.  Classical modes integrate the identical centroid
equations without the quantum width and walker offset.

Modes
-----
quantum_per_walker / classical_per_walker
    each system walker k has its own replica of every oscillator
    (topology "replicated"), or owns exactly one oscillator
    (topology "diagonal", requires L == M).
quantum_mean_field / classical_mean_field
    one oscillator state each, driven by the walker-averaged system
    coordinate; every system walker then feels the same bath field.

Temperature enters only through the initial coherent amplitudes, drawn
from the Glauber-P thermal mixture with mean occupancy 1/(exp(beta W)-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import propagator, walkers
from .errors import TdqmcError
from .grid import Grid, GuideWave, gaussian_wave, gradient_array, interp_rows
from .potentials import CouplingMatrix, bilinear_coupling

MODES = ("quantum_per_walker", "quantum_mean_field",
         "classical_per_walker", "classical_mean_field")
ENGINES = ("gaussian", "grid")
TOPOLOGIES = ("replicated", "diagonal")


@dataclass(frozen=True)
class Temperature:
    """Inverse temperature beta = 1/T in atomic units; beta = inf means T = 0."""

    beta: float

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValueError("beta must be positive (use math.inf for T = 0)")

    @classmethod
    def zero(cls) -> "Temperature":
        return cls(math.inf)

    @property
    def is_zero(self) -> bool:
        return math.isinf(self.beta)

    def occupancy(self, omega) -> np.ndarray:
        """Bose mean occupancy 1/(e^{beta omega} - 1); zero at beta = inf."""
        if self.is_zero:
            return np.zeros_like(np.asarray(omega, dtype=np.float64))
        return 1.0 / np.expm1(self.beta * np.asarray(omega, dtype=np.float64))


@dataclass(frozen=True)
class BathSpec:
    """Oscillator ladder, masses, coupling, and evolution mode/engine."""

    L: int
    coupling: CouplingMatrix
    omega_max: float = 0.6
    mass: float = 1.0
    mode: str = "quantum_per_walker"
    engine: str = "gaussian"
    topology: str = "replicated"

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one oscillator")
        if self.omega_max <= 0 or self.mass <= 0:
            raise ValueError("omega_max and mass must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if self.coupling.c.shape[0] != self.L:
            raise ValueError(
                f"coupling matrix has {self.coupling.c.shape[0]} rows, L={self.L}")

    @property
    def frequencies(self) -> np.ndarray:
        """Equidistant ladder j * omega_max / L, j = 1..L (never zero)."""
        return np.arange(1, self.L + 1) * (self.omega_max / self.L)

    @property
    def per_walker(self) -> bool:
        return self.mode.endswith("per_walker")

    @property
    def quantum(self) -> bool:
        return self.mode.startswith("quantum")


@dataclass
class CoherentState:
    """Minimum-uncertainty oscillator state: centroid pair plus action phase."""

    x_mean: float
    p_mean: float
    omega: float
    mass: float = 1.0
    phase: float = 0.0

    @property
    def width(self) -> float:
        return 1.0 / math.sqrt(2.0 * self.mass * self.omega)


def detuning_violations(spec: BathSpec, level_energies, margin: float = 1e-4):
    """Bath frequencies closer than ``margin`` to any level spacing."""
    levels = np.sort(np.asarray(level_energies, dtype=np.float64))
    spacings = (levels[None, :] - levels[:, None])[np.triu_indices(levels.size, 1)]
    spacings = spacings[(spacings > 0) & (spacings <= spec.omega_max + margin)]
    out = []
    for j, om in enumerate(spec.frequencies):
        gap = np.abs(spacings - om)
        if gap.size and gap.min() < margin:
            out.append((j + 1, float(om), float(spacings[np.argmin(gap)])))
    return out


# ---------------------------------------------------------------------------
# centroid dynamics (shared by the gaussian engine and the classical modes)
# ---------------------------------------------------------------------------

def _midpoint_xp(x, p, f_ext, dt, omega, mass):
    """Implicit-midpoint step of Xdot = P/m, Pdot = -m w^2 X + f_ext.

    Symplectic and exactly energy-conserving for f_ext = 0; identical
    update for quantum centroids and classical bath walkers.
    """
    h = 0.5 * dt
    rx = x + (h / mass) * p
    rp = p - (h * mass * omega ** 2) * x + dt * f_ext
    den = 1.0 + (h * omega) ** 2
    x_new = (rx + (h / mass) * rp) / den
    p_new = (rp - (h * mass * omega ** 2) * rx) / den
    return x_new, p_new


def bath_step_gaussian(state: CoherentState, drive: float, dt: float,
                       c: float) -> CoherentState:
    """Advance one coherent state under the bilinear drive c * drive * X.

    The width never changes; the centroid follows the classical driven
    oscillator and the phase accumulates the classical action minus the
    zero-point rotation.
    """
    f = -c * drive
    x_new, p_new = _midpoint_xp(state.x_mean, state.p_mean, f, dt,
                                state.omega, state.mass)
    xm, pm = 0.5 * (state.x_mean + x_new), 0.5 * (state.p_mean + p_new)
    lagr = pm ** 2 / (2.0 * state.mass) - 0.5 * state.mass * state.omega ** 2 * xm ** 2 + f * xm
    return CoherentState(float(x_new), float(p_new), state.omega, state.mass,
                         state.phase + dt * (lagr - 0.5 * state.omega))


def classical_bath_step(xp: tuple[float, float], drive: float, dt: float,
                        omega: float, mass: float, c: float) -> tuple[float, float]:
    """Classical oscillator step; same integrator and trajectory family as
    the gaussian engine's centroid."""
    x_new, p_new = _midpoint_xp(xp[0], xp[1], -c * drive, dt, omega, mass)
    return float(x_new), float(p_new)


def bath_relax_imaginary(state: CoherentState, drive: float, dt: float,
                         c: float) -> CoherentState:
    """Imaginary-time flow: exponential decay toward the displaced minimum."""
    xstar = -c * drive / (state.mass * state.omega ** 2)
    d = math.exp(-state.omega * dt)
    return CoherentState(xstar + (state.x_mean - xstar) * d, state.p_mean * d,
                         state.omega, state.mass, state.phase)


def bath_step_grid(state: GuideWave, drive: float, dt: float, omega: float,
                   mass: float, c: float, mode: str = "real_time") -> GuideWave:
    """Grid-engine step: full wave propagation under the bilinear potential
    with the system coordinate frozen at ``drive``."""
    pot = bilinear_coupling(drive, state.grid.points, omega, mass, c)
    return propagator.step(state, pot, propagator.StepParams(dt, mass, mode))


# ---------------------------------------------------------------------------
# whole-bath state
# ---------------------------------------------------------------------------

@dataclass
class BathState:
    """Array-of-replicas bath state.

    Gaussian engine and classical modes store centroid arrays with one
    column per system walker (``replicated``), a single vector aligned
    with the walkers (``diagonal``), or a single vector over oscillators
    (mean-field).  The grid engine additionally stores one wave stack and
    tracked walker positions per oscillator.
    """

    spec: BathSpec
    xbar: np.ndarray           # (L, M), or (L,) for diagonal/mean-field
    pbar: np.ndarray
    offset: np.ndarray | None  # quantum walker offsets within the wave
    phase: np.ndarray | None
    grids: list[Grid] | None = None          # grid engine only
    waves: list[np.ndarray] | None = None    # one (M, n_j) stack per oscillator
    grid_walkers: np.ndarray | None = None   # tracked positions, same shape as xbar
    grid_rng: np.random.Generator | None = None

    def _lm(self, arr: np.ndarray) -> np.ndarray:
        """View an (L,) or (L, M) replica array as (L, m)."""
        return arr.reshape(self.spec.L, -1)

    @property
    def positions(self) -> np.ndarray:
        """Bath walker positions R_j^k (centroid plus offset where quantum)."""
        if self.spec.engine == "grid":
            return self.grid_walkers
        if self.offset is not None:
            return self.xbar + self.offset
        return self.xbar

    def mean_x(self) -> np.ndarray:
        """<X> per (oscillator, replica); grid engine integrates the waves."""
        if self.spec.engine != "grid":
            return self.xbar
        out = np.empty_like(self._lm(self.grid_walkers))
        for j, (g, stack) in enumerate(zip(self.grids, self.waves)):
            out[j] = g.dx * np.sum(g.points * np.abs(stack) ** 2, axis=1)
        return out.reshape(np.shape(self.xbar))

    def mean_p(self) -> np.ndarray:
        """<P> per (oscillator, replica)."""
        if self.spec.engine != "grid":
            return self.pbar
        out = np.empty_like(self._lm(self.grid_walkers))
        for j, (g, stack) in enumerate(zip(self.grids, self.waves)):
            grad = gradient_array(stack, g.dx)
            out[j] = g.dx * np.imag(np.sum(np.conj(stack) * grad, axis=1))
        return out.reshape(np.shape(self.xbar))


def _replica_shape(spec: BathSpec, m_walkers: int):
    if not spec.per_walker or spec.topology == "diagonal":
        if spec.topology == "diagonal" and spec.L != m_walkers:
            raise ValueError(
                f"diagonal topology requires L == M, got L={spec.L}, M={m_walkers}")
        return (spec.L,)
    return (spec.L, m_walkers)


def sample_thermal_initial(spec: BathSpec, temp: Temperature,
                           rng: np.random.Generator,
                           m_walkers: int = 1) -> BathState:
    """Draw the initial bath state.

    Coherent amplitudes are complex-Gaussian with <|alpha|^2> equal to the
    Bose occupancy of each oscillator, so the ensemble reproduces the exact
    thermal oscillator state; at beta = inf every centroid starts at rest
    and only the quantum width (walker offsets) remains.
    """
    shape = _replica_shape(spec, m_walkers)
    om = spec.frequencies.reshape((-1,) + (1,) * (len(shape) - 1))
    nbar = temp.occupancy(om)
    amp = np.sqrt(np.maximum(nbar, 0.0) / 2.0)
    re = amp * rng.standard_normal(shape)
    im = amp * rng.standard_normal(shape)
    xbar = np.sqrt(2.0 / (spec.mass * om)) * re
    pbar = np.sqrt(2.0 * spec.mass * om) * im

    offset = phase = None
    if spec.quantum:
        width = 1.0 / np.sqrt(2.0 * spec.mass * om)
        offset = width * rng.standard_normal(shape)
        phase = np.zeros(shape)

    state = BathState(spec, xbar, pbar, offset, phase)
    if spec.engine == "grid":
        _build_grid_engine(state, rng)
    return state


def _build_grid_engine(state: BathState, rng: np.random.Generator):
    """Materialize per-oscillator meshes, coherent waves, and walkers."""
    spec = state.spec
    if not spec.quantum:
        raise ValueError("grid engine requires a quantum mode")
    xb = state._lm(state.xbar)
    pb = state._lm(state.pbar)
    off = state._lm(state.offset)
    grids, wave_stacks = [], []
    walk = np.empty_like(xb)
    for j, om in enumerate(spec.frequencies):
        width = 1.0 / math.sqrt(2.0 * spec.mass * om)
        half = 8.0 * width + float(np.max(np.abs(xb[j])))
        n = max(int(round(2.0 * half / (width / 10.0))) + 1, 64)
        g = Grid(-half, half, n)
        stack = np.empty((xb.shape[1], n), dtype=np.complex128)
        for k in range(xb.shape[1]):
            stack[k] = gaussian_wave(g, center=xb[j, k], width=width,
                                     momentum=pb[j, k]).amplitude
        grids.append(g)
        wave_stacks.append(stack)
        walk[j] = xb[j] + off[j]
    state.grids = grids
    state.waves = wave_stacks
    state.grid_walkers = walk.reshape(np.shape(state.xbar))
    state.grid_rng = rng.spawn(1)[0]


def resample_thermal(state: BathState, temp: Temperature,
                     rng: np.random.Generator) -> None:
    """Add a fresh thermal coherent displacement around the current state.

    Applied once at the end of ground-state preparation: the relaxed
    (displaced) centroids stay put at beta = inf and acquire exactly the
    thermal fluctuation statistics at finite beta.
    """
    shape = np.shape(state.xbar)
    om = state.spec.frequencies.reshape((-1,) + (1,) * (len(shape) - 1))
    nbar = temp.occupancy(om)
    amp = np.sqrt(np.maximum(nbar, 0.0) / 2.0)
    state.xbar = state.xbar + np.sqrt(2.0 / (state.spec.mass * om)) \
        * amp * rng.standard_normal(shape)
    state.pbar = state.pbar + np.sqrt(2.0 * state.spec.mass * om) \
        * amp * rng.standard_normal(shape)


def _drive_matrix(state: BathState, system_positions: np.ndarray) -> np.ndarray:
    """External force -sum_i C_ji r_i^k per (oscillator, replica)."""
    spec = state.spec
    pos = np.atleast_2d(system_positions)           # (M, N)
    c = spec.coupling.strengths                     # (L, N)
    if not spec.per_walker:
        return -c @ pos.mean(axis=0)                # (L,)
    if spec.topology == "diagonal":
        return -np.sum(c * pos, axis=1)             # (L,) with L == M
    return -(c @ pos.T)                             # (L, M)


def bath_step_real(state: BathState, system_positions: np.ndarray,
                   dt: float) -> None:
    """Real-time step of every replica, system coordinates frozen."""
    spec = state.spec
    f = _drive_matrix(state, system_positions)
    om = spec.frequencies.reshape((-1,) + (1,) * (state.xbar.ndim - 1))
    if spec.engine == "grid":
        _grid_step(state, f, dt, imaginary=False)
        return
    state.xbar, state.pbar = _midpoint_xp(state.xbar, state.pbar, f, dt,
                                          om, spec.mass)


def bath_relax_imaginary_all(state: BathState, system_positions: np.ndarray,
                             dt: float) -> None:
    """Imaginary-time relaxation of every replica toward its displaced
    minimum (closed form for the centroid engines)."""
    spec = state.spec
    f = _drive_matrix(state, system_positions)
    om = spec.frequencies.reshape((-1,) + (1,) * (state.xbar.ndim - 1))
    if spec.engine == "grid":
        _grid_step(state, f, dt, imaginary=True)
        return
    xstar = f / (spec.mass * om ** 2)
    d = np.exp(-om * dt)
    state.xbar = xstar + (state.xbar - xstar) * d
    state.pbar = state.pbar * d


def _grid_step(state: BathState, f: np.ndarray, dt: float, imaginary: bool):
    """Propagate grid-engine waves and their tracked walkers."""
    spec = state.spec
    f2 = f.reshape(spec.L, -1)
    walk = state._lm(state.grid_walkers).copy()
    for j, om in enumerate(spec.frequencies):
        g = state.grids[j]
        # potential rows: (m w^2/2) X^2 - f_jk X  (f already includes -C r)
        pot = 0.5 * spec.mass * om ** 2 * g.points[None, :] ** 2 \
            - f2[j][:, None] * g.points[None, :]
        new = propagator.cn_step_batch(state.waves[j], pot, dt, spec.mass,
                                       g.dx, imaginary=imaginary)
        state.waves[j] = new
        if imaginary:
            width = 1.0 / math.sqrt(2.0 * spec.mass * om)
            walk[j] = walkers.metropolis_rows(
                new, g, walk[j], 0.5 * width, 5, state.grid_rng)
        else:
            v = walkers.drift_rows(new, g, walk[j], spec.mass, dt)
            walk[j] = np.clip(walk[j] + v * dt, g.x_min, g.x_max)
    state.grid_walkers = walk.reshape(np.shape(state.grid_walkers))


def bath_force_on_system(state: BathState, k: int | None, species: int,
                         grid: Grid) -> np.ndarray:
    """Additive potential sum_j C_ji R_j x on the system grid.

    Per-walker modes use walker k's own replica chain; mean-field modes
    average over replicas (a single replica per oscillator here).  The
    oscillator self-energy term is constant in x and dropped.
    """
    coef = bath_force_coefficients(state, species)
    if np.ndim(coef) != 0:
        if k is None:
            raise ValueError("per-walker bath force needs a walker index")
        coef = coef[k]
    return float(coef) * grid.points


def bath_force_coefficients(state: BathState, species: int):
    """Linear-in-x force coefficient per system walker (or scalar)."""
    spec = state.spec
    c = spec.coupling.strengths[:, species]          # (L,)
    pos = state.positions
    if not spec.per_walker:
        return float(c @ np.atleast_1d(pos))         # same field for all k
    if spec.topology == "diagonal":
        return c * pos                               # (M,), oscillator k only
    return c @ pos                                   # (M,)


def bath_walker_position(state: BathState, j: int, k: int) -> float:
    """Position of bath walker (oscillator j, replica k)."""
    pos = state.positions
    if pos.ndim == 1:
        return float(pos[j if state.spec.topology != "diagonal" else k])
    return float(pos[j, k])


def bath_energy(state: BathState) -> float:
    """Mean oscillator energy over replicas (centroid part plus zero point)."""
    spec = state.spec
    om = spec.frequencies.reshape((-1,) + (1,) * (state.xbar.ndim - 1))
    e = state.pbar ** 2 / (2.0 * spec.mass) \
        + 0.5 * spec.mass * om ** 2 * state.xbar ** 2
    if spec.quantum:
        e = e + 0.5 * om
    return float(np.mean(np.sum(e, axis=0)))
