"""Experiment orchestration: preparation, thermal densities, dipole dynamics.

The self-consistent loop advances, per step: (1) snapshot walker and bath
positions, (2) one propagation step of every guide wave under its walker-
and bath-dependent potential, (3) walker update (Metropolis resampling in
imaginary time, pure drift in real time), (4) bath replica update,
(5) refresh of the per-species correlation lengths.  Preparation runs the
loop in imaginary time, applies the thermal displacement to the bath at
the end, then re-relaxes the waves against the frozen thermal bath so the
prepared ensemble actually carries the temperature.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import bath as bath_mod
from . import propagator
from .config import SimConfig, config_echo
from .errors import BracketError, TdqmcError
from .grid import Grid, gaussian_wave
from .observables import diagonal_density_from_stack, ensemble_energy
from .oracle import diagonalize_1e, diagonalize_2e, thermal_density
from .potentials import (PairPotentialParams, SoftCoulombParams,
                         coupling_matrix, correlation_length,
                         effective_potential_ensemble, pair_potential,
                         soft_coulomb)
from .walkers import drift_rows, metropolis_rows, reflect, rng_stream


@dataclass(frozen=True)
class PulseSpec:
    """Unipolar Gaussian kick E(t) = amplitude exp(-((t-center)/width)^2)."""

    amplitude: float = 0.05
    center: float = 1.5
    width: float = 0.5

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("pulse width must be positive")

    def field(self, t: float) -> float:
        return self.amplitude * math.exp(-((t - self.center) / self.width) ** 2)


@dataclass
class RunReport:
    """Run echo: scalar results, traces, and wall-clock per phase."""

    seed: int
    config: dict
    timings: dict = field(default_factory=dict)
    energy_trace: np.ndarray | None = None
    tau_trace: np.ndarray | None = None
    final_density: np.ndarray | None = None
    dipole_time: np.ndarray | None = None
    dipole_trace: np.ndarray | None = None
    dipole_envelope: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def scalar_summary(self) -> dict:
        out = {"seed": self.seed, "config": self.config,
               "timings": self.timings, "extras": self.extras}
        if self.energy_trace is not None and len(self.energy_trace):
            out["final_energy"] = float(self.energy_trace[-1])
        return out

    def to_json(self) -> str:
        return json.dumps(self.scalar_summary(), indent=2)


@dataclass
class PreparedState:
    """Everything the real-time stage needs from preparation."""

    cfg: SimConfig
    grid: Grid
    wave_stacks: list[np.ndarray]     # per species, (M, n)
    positions: np.ndarray             # (M, N)
    sigma: np.ndarray                 # (N,)
    bath_state: bath_mod.BathState | None
    report: RunReport


def setup_threads(cfg: SimConfig) -> int:
    """Thread count from TDQMC_THREADS or the config; applied to numba."""
    n = int(os.environ.get("TDQMC_THREADS", cfg.threads))
    n = max(1, n)
    if propagator.HAVE_NUMBA:
        import numba
        n = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)
    return n


def _system_potential(species_cfg, x: np.ndarray) -> np.ndarray:
    if species_cfg.potential == "soft_coulomb":
        return soft_coulomb(x, SoftCoulombParams())
    raise ValueError(f"unknown potential id {species_cfg.potential!r}")


def _static_callable(species_cfg):
    if species_cfg.potential == "soft_coulomb":
        p = SoftCoulombParams()
        return lambda x: soft_coulomb(x, p)
    raise ValueError(f"unknown potential id {species_cfg.potential!r}")


def build_bath_spec(cfg: SimConfig) -> bath_mod.BathSpec | None:
    b = cfg.bath
    if not b.enabled:
        return None
    freqs = np.arange(1, b.L + 1) * (b.omega_max / b.L)
    cm = coupling_matrix(freqs, b.mass, len(cfg.species),
                         scale=b.coupling_scale, shape=b.coupling_shape)
    return bath_mod.BathSpec(L=b.L, coupling=cm, omega_max=b.omega_max,
                             mass=b.mass, mode=b.mode, engine=b.engine,
                             topology=b.topology)


class _Engine:
    """Shared state and per-step kernels for the self-consistent loop."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.threads = setup_threads(cfg)
        g = cfg.grid
        self.grid = Grid(g.x_min, g.x_max, g.n)
        self.x = self.grid.points
        self.n_species = len(cfg.species)
        self.masses = [s.mass for s in cfg.species]
        self.v_static = [_system_potential(s, self.x) for s in cfg.species]
        self.v_static_fn = [_static_callable(s) for s in cfg.species]
        self.pair_params = PairPotentialParams()
        self.pair_fn = (lambda a, b: pair_potential(a, b, self.pair_params)) \
            if self.n_species > 1 else None
        self.temp = bath_mod.Temperature(cfg.beta)
        self.pulse = PulseSpec(cfg.pulse.amplitude, cfg.pulse.center,
                               cfg.pulse.width)
        self.met_rngs = [rng_stream(cfg.seed, species=i, purpose="metropolis")
                         for i in range(self.n_species)]

    def initial_state(self):
        """Gaussian waves at per-walker random centers; walkers start there."""
        m = self.cfg.walkers
        stacks, centers = [], []
        for i in range(self.n_species):
            rng = rng_stream(self.cfg.seed, species=i, purpose="init")
            c = self.cfg.init_spread * rng.standard_normal(m)
            stack = np.empty((m, self.grid.n), dtype=np.complex128)
            for k in range(m):
                stack[k] = gaussian_wave(self.grid, center=c[k],
                                         width=1.0).amplitude
            stacks.append(stack)
            centers.append(c)
        positions = np.stack(centers, axis=1)
        sigma = self._sigmas(positions)
        return stacks, positions, sigma

    def _sigmas(self, positions: np.ndarray) -> np.ndarray:
        if positions.shape[0] < 2:
            return np.full(self.n_species, self.cfg.kernel.sigma_floor)
        return np.array([correlation_length(positions[:, i], self.cfg.kernel)
                         for i in range(self.n_species)])

    def assemble_potential(self, i: int, positions: np.ndarray,
                           sigma: np.ndarray, bath_coefs, e_field: float
                           ) -> np.ndarray:
        """Potential rows for every wave of species i, walkers frozen."""
        pot = np.broadcast_to(self.v_static[i],
                              (positions.shape[0], self.grid.n)).copy()
        for j in range(self.n_species):
            if j == i:
                continue
            pot += effective_potential_ensemble(self.x, positions[:, j],
                                                float(sigma[j]), self.pair_fn)
        if bath_coefs is not None:
            coef = bath_coefs[i]
            if np.ndim(coef) == 0:
                pot += coef * self.x
            else:
                pot += coef[:, None] * self.x[None, :]
        if e_field:
            pot += e_field * self.x
        return pot

    def bath_coefs(self, bath_state):
        if bath_state is None:
            return None
        return [bath_mod.bath_force_coefficients(bath_state, i)
                for i in range(self.n_species)]

    def measure_energy(self, stacks, positions) -> float:
        return ensemble_energy(positions, stacks, self.grid, self.masses,
                               self.v_static_fn, self.pair_fn)

    def imaginary_step(self, stacks, positions, sigma, bath_state,
                       relax_bath: bool):
        """One preparation step; mutates stacks/positions/bath in place."""
        cfg = self.cfg
        snapshot = positions.copy()
        coefs = self.bath_coefs(bath_state)
        for i in range(self.n_species):
            pot = self.assemble_potential(i, snapshot, sigma, coefs, 0.0)
            stacks[i] = propagator.cn_step_batch(
                stacks[i], pot, cfg.time.dt_imag, self.masses[i],
                self.grid.dx, imaginary=True)
        for i in range(self.n_species):
            scale = math.sqrt(cfg.time.dt_imag / self.masses[i])
            positions[:, i] = metropolis_rows(
                stacks[i], self.grid, positions[:, i], scale, 10,
                self.met_rngs[i])
        if bath_state is not None and relax_bath:
            bath_mod.bath_relax_imaginary_all(bath_state, snapshot,
                                              cfg.time.dt_imag)
        sigma[:] = self._sigmas(positions)

    def real_step(self, stacks, positions, sigma, bath_state, t: float):
        cfg = self.cfg
        snapshot = positions.copy()
        coefs = self.bath_coefs(bath_state)
        e_field = self.pulse.field(t + 0.5 * cfg.time.dt_real)
        for i in range(self.n_species):
            pot = self.assemble_potential(i, snapshot, sigma, coefs, e_field)
            stacks[i] = propagator.cn_step_batch(
                stacks[i], pot, cfg.time.dt_real, self.masses[i],
                self.grid.dx, imaginary=False)
        for i in range(self.n_species):
            v = drift_rows(stacks[i], self.grid, positions[:, i],
                           self.masses[i], cfg.time.dt_real)
            positions[:, i] = reflect(positions[:, i] + v * cfg.time.dt_real,
                                      self.grid.x_min, self.grid.x_max)
        if bath_state is not None:
            bath_mod.bath_step_real(bath_state, snapshot, cfg.time.dt_real)
        sigma[:] = self._sigmas(positions)


def prepare_ground(cfg: SimConfig) -> PreparedState:
    """Imaginary-time preparation of the (finite-temperature) ground state.

    Phase A relaxes system and bath jointly at zero bath displacement;
    the bath then receives its thermal coherent displacements and phase B
    re-relaxes the waves against the frozen thermal bath.  Raises
    ConvergenceError if a positive tolerance is configured and never met.
    """
    eng = _Engine(cfg)
    t0 = time.perf_counter()
    stacks, positions, sigma = eng.initial_state()

    bath_state = None
    spec = build_bath_spec(cfg)
    if spec is not None:
        rng_b = rng_stream(cfg.seed, purpose="bath_offset")
        bath_state = bath_mod.sample_thermal_initial(
            spec, bath_mod.Temperature.zero(), rng_b, m_walkers=cfg.walkers)

    energies = []
    conv = cfg.convergence
    stop_at = None
    for it in range(cfg.time.n_prep_steps):
        _step_guard(eng, it, "A", eng.imaginary_step,
                    stacks, positions, sigma, bath_state, True)
        energies.append(eng.measure_energy(stacks, positions))
        if conv.tol > 0 and len(energies) >= 2 * conv.window \
                and it % conv.window == 0:
            prev = np.mean(energies[-2 * conv.window:-conv.window])
            cur = np.mean(energies[-conv.window:])
            if abs(cur - prev) < conv.tol:
                stop_at = it
                break
    t_phase_a = time.perf_counter() - t0

    t1 = time.perf_counter()
    if bath_state is not None:
        rng_t = rng_stream(cfg.seed, purpose="bath_thermal")
        bath_mod.resample_thermal(bath_state, eng.temp, rng_t)
        for it in range(cfg.time.n_thermal_steps):
            _step_guard(eng, it, "B", eng.imaginary_step,
                        stacks, positions, sigma, bath_state, False)
            energies.append(eng.measure_energy(stacks, positions))
    t_phase_b = time.perf_counter() - t1

    energies = np.asarray(energies)
    report = RunReport(
        seed=cfg.seed, config=config_echo(cfg),
        timings={"prepare_phase_a_s": t_phase_a,
                 "prepare_phase_b_s": t_phase_b},
        energy_trace=energies,
        tau_trace=np.arange(1, len(energies) + 1) * cfg.time.dt_imag,
        extras={"prep_converged_at": stop_at,
                "final_energy": float(energies[-1])},
    )
    return PreparedState(cfg, eng.grid, stacks, positions, sigma,
                         bath_state, report)


def _step_guard(eng, it, phase, fn, *args):
    try:
        fn(*args)
    except TdqmcError as exc:
        raise type(exc)(f"preparation phase {phase}, step {it}: {exc}") from exc


def guide_wave_spread(stack: np.ndarray, dx: float, sample: int = 0) -> float:
    """Max pairwise L2 distance between unit-norm waves (collapse metric).

    Global phases are modded out: d_ab^2 = 2 (1 - |<a|b>|), which equals the
    plain L2 distance when the waves' phases align.  ``sample`` > 0 restricts
    to that many evenly spaced waves.
    """
    amps = np.atleast_2d(stack)
    if sample and amps.shape[0] > sample:
        amps = amps[:: max(1, amps.shape[0] // sample)][:sample]
    gram = np.abs(dx * (amps.conj() @ amps.T))
    worst = 2.0 * (1.0 - gram.min())
    return float(np.sqrt(max(worst, 0.0)))


def fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half maximum via linear interpolation of the crossings."""
    i = int(np.argmax(y))
    half = y[i] / 2.0
    j = i
    while j + 1 < len(y) and y[j + 1] > half:
        j += 1
    if j + 1 >= len(y):
        raise ValueError("density does not fall below half maximum on the right")
    xr = x[j] + (x[j + 1] - x[j]) * (y[j] - half) / (y[j] - y[j + 1])
    j = i
    while j - 1 >= 0 and y[j - 1] > half:
        j -= 1
    if j - 1 < 0:
        raise ValueError("density does not fall below half maximum on the left")
    xl = x[j] - (x[j] - x[j - 1]) * (y[j] - half) / (y[j] - y[j - 1])
    return float(xr - xl)


def oracle_density_for(cfg: SimConfig, grid: Grid, beta: float,
                       cutoff: float = 1.0, k2e: int = 12) -> np.ndarray:
    """Reference thermal diagonal density for the configured system."""
    v = _system_potential(cfg.species[0], grid.points)
    if len(cfg.species) == 1:
        dec = diagonalize_1e(grid, v, mass=cfg.species[0].mass, cutoff=cutoff)
        return thermal_density(dec, beta)
    oracle_grid = Grid(grid.x_min, grid.x_max, min(grid.n, 201))
    dec = diagonalize_2e(oracle_grid,
                         _system_potential(cfg.species[0], oracle_grid.points),
                         PairPotentialParams(), k=k2e,
                         mass=cfg.species[0].mass)
    red = thermal_density(dec, beta)
    return np.interp(grid.points, oracle_grid.points, red)


def run_thermal_density(cfg: SimConfig):
    """Prepare at cfg.beta and compare the ensemble density to the oracle."""
    prep = prepare_ground(cfg)
    t0 = time.perf_counter()
    rho_t = diagonal_density_from_stack(prep.wave_stacks[0])
    rho_o = oracle_density_for(cfg, prep.grid, cfg.beta)
    f_t, f_o = fwhm(prep.grid.points, rho_t), fwhm(prep.grid.points, rho_o)
    rep = prep.report
    rep.final_density = rho_t
    rep.timings["thermal_compare_s"] = time.perf_counter() - t0
    rep.extras.update({
        "fwhm_tdqmc": f_t, "fwhm_oracle": f_o,
        "fwhm_rel_diff": abs(f_t - f_o) / f_o,
        "peak_tdqmc": float(rho_t.max()), "peak_oracle": float(rho_o.max()),
    })
    return prep, rho_t, rho_o


def dipole_series(stacks, grid: Grid) -> float:
    """Total <x> summed over species (streaming over waves)."""
    return sum(float(grid.dx * np.sum(grid.points
                                      * diagonal_density_from_stack(s)))
               for s in stacks)


def envelope_metrics(t: np.ndarray, x_mean: np.ndarray, pulse: PulseSpec,
                     dt: float):
    """Peak envelope of the post-pulse dipole oscillation.

    Returns (envelope array on t, ratio of last to first peak amplitude).
    """
    start = int(min((pulse.center + 4 * pulse.width) / dt, len(t) - 2))
    s = x_mean - np.mean(x_mean[start:])
    a = np.abs(s)
    peaks, _ = find_peaks(a[start:], distance=max(1, int(2.0 / dt)))
    peaks = peaks + start
    if len(peaks) < 2:
        return np.zeros_like(t), float("nan")
    env = np.interp(t, t[peaks], a[peaks])
    ratio = float(a[peaks[-1]] / a[peaks[0]])
    return env, ratio


def run_dipole_dynamics(cfg: SimConfig):
    """Kick the prepared state and record <x>(t) = Tr(x rho) every step."""
    prep = prepare_ground(cfg)
    eng = _Engine(cfg)
    stacks = [s.copy() for s in prep.wave_stacks]
    positions = prep.positions.copy()
    sigma = prep.sigma.copy()
    bath_state = prep.bath_state

    t0 = time.perf_counter()
    nt = cfg.time.n_real_steps
    times = np.arange(nt) * cfg.time.dt_real
    trace = np.empty(nt)
    for it in range(nt):
        try:
            eng.real_step(stacks, positions, sigma, bath_state, float(times[it]))
        except TdqmcError as exc:
            raise type(exc)(f"real-time step {it}: {exc}") from exc
        trace[it] = dipole_series(stacks, eng.grid)
    env, ratio = envelope_metrics(times, trace, eng.pulse, cfg.time.dt_real)

    rep = prep.report
    rep.dipole_time = times
    rep.dipole_trace = trace
    rep.dipole_envelope = env
    rep.timings["dynamics_s"] = time.perf_counter() - t0
    rep.extras["envelope_ratio"] = ratio
    rep.extras["dipole_peak"] = float(np.max(np.abs(trace - trace[0])))
    return prep, times, trace, env


def calibrate_coupling(cfg: SimConfig, beta_ref: float,
                       fwhm_tol: float = 0.005, max_bisect: int = 8):
    """Bisection on the coupling scale to match the oracle width at beta_ref.

    Returns (scale, achieved residual, report).  The report's extras carry
    the full (scale, fwhm) scan so the monotone-broadening assumption can
    be audited.
    """
    eng_grid = Grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
    target = fwhm(eng_grid.points, oracle_density_for(cfg, eng_grid, beta_ref))
    base = cfg.replace(beta=beta_ref)
    scan: list[tuple[float, float]] = []

    def width_at(scale: float) -> float:
        import dataclasses
        c = base.replace(bath=dataclasses.replace(
            base.bath, coupling_scale=scale, enabled=True))
        prep = prepare_ground(c)
        w = fwhm(prep.grid.points,
                 diagonal_density_from_stack(prep.wave_stacks[0]))
        scan.append((scale, w))
        return w

    t0 = time.perf_counter()
    lo, w_lo = 0.0, width_at(0.0)
    if w_lo >= target:
        # already as wide as the target: zero coupling is the answer
        return 0.0, abs(w_lo - target), _cal_report(cfg, beta_ref, target,
                                                    scan, t0)
    hi = max(cfg.bath.coupling_scale, 0.1)
    w_hi = width_at(hi)
    grow = 0
    while w_hi < target and grow < 7:
        hi *= 2.0
        w_hi = width_at(hi)
        grow += 1
    if w_hi < target:
        raise BracketError(
            f"coupling scale in [0, {hi}] cannot reach the target width "
            f"{target:.4f} (best {w_hi:.4f})", scanned=scan)

    best_s, best_w = hi, w_hi
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        w_mid = width_at(mid)
        if abs(w_mid - target) < abs(best_w - target):
            best_s, best_w = mid, w_mid
        if abs(w_mid - target) <= fwhm_tol * target:
            break
        if w_mid < target:
            lo = mid
        else:
            hi = mid
    return best_s, abs(best_w - target), _cal_report(cfg, beta_ref, target,
                                                     scan, t0)


def _cal_report(cfg, beta_ref, target, scan, t0) -> RunReport:
    return RunReport(
        seed=cfg.seed, config=config_echo(cfg),
        timings={"calibrate_s": time.perf_counter() - t0},
        extras={"beta_ref": beta_ref, "fwhm_target": target,
                "scan": [list(map(float, p)) for p in scan]},
    )


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def write_energy_csv(path, report: RunReport):
    rows = np.column_stack([np.arange(1, len(report.energy_trace) + 1),
                            report.tau_trace, report.energy_trace])
    np.savetxt(path, rows, delimiter=",", header="step,tau,E", comments="",
               fmt=["%d", "%.6f", "%.12g"])


def write_density_csv(path, x, rho_tdqmc, rho_oracle):
    rows = np.column_stack([x, rho_tdqmc, rho_oracle])
    np.savetxt(path, rows, delimiter=",", header="x,rho_tdqmc,rho_oracle",
               comments="", fmt="%.12g")


def write_dipole_csv(path, t, x_mean, envelope):
    rows = np.column_stack([t, x_mean, envelope])
    np.savetxt(path, rows, delimiter=",", header="t,x_mean,envelope",
               comments="", fmt="%.12g")


def write_report_json(path, report: RunReport):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
