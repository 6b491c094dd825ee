"""Norm-preserving real-time and energy-decaying imaginary-time propagation.

One step is an implicit-midpoint (Crank-Nicolson) solve of the tridiagonal
one-body Hamiltonian.  In real time the update is exactly unitary and
time-reversible; in imaginary time the same solve damps excited components
and the wave is renormalized afterwards.  The batched entry point
``cn_step_batch`` advances many independent waves at once - that is the
walker-parallel loop of the whole package - with a numba kernel that runs
the per-wave Thomas solves across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NodeError, UnstableStepError
from .grid import (NODE_EPS, Grid, GuideWave, interp_array, laplacian_array)

MODES = ("real_time", "imaginary_time")

try:
    import numba

    @numba.njit(parallel=True, cache=True, nogil=True)
    def _thomas_rows(diag, off, rhs, out):
        # One tridiagonal solve per row; rows are independent, so the
        # parallel schedule cannot change any row's arithmetic.
        m, n = diag.shape
        for k in numba.prange(m):
            cp = np.empty(n, np.complex128)
            dp = np.empty(n, np.complex128)
            cp[0] = off / diag[k, 0]
            dp[0] = rhs[k, 0] / diag[k, 0]
            for i in range(1, n):
                den = diag[k, i] - off * cp[i - 1]
                cp[i] = off / den
                dp[i] = (rhs[k, i] - off * dp[i - 1]) / den
            out[k, n - 1] = dp[n - 1]
            for i in range(n - 2, -1, -1):
                out[k, i] = dp[i] - cp[i] * out[k, i + 1]

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _thomas_rows_numpy(diag, off, rhs, out):
    m, n = diag.shape
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[:, 0] = off / diag[:, 0]
    dp[:, 0] = rhs[:, 0] / diag[:, 0]
    for i in range(1, n):
        den = diag[:, i] - off * cp[:, i - 1]
        cp[:, i] = off / den
        dp[:, i] = (rhs[:, i] - off * dp[:, i - 1]) / den
    out[:, -1] = dp[:, -1]
    for i in range(n - 2, -1, -1):
        out[:, i] = dp[:, i] - cp[:, i] * out[:, i + 1]


@dataclass(frozen=True)
class StepParams:
    """Time step, particle mass, and propagation mode."""

    dt: float
    mass: float
    mode: str = "real_time"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def cn_step_batch(amps: np.ndarray, potential: np.ndarray, dt: float,
                  mass: float, dx: float, imaginary: bool) -> np.ndarray:
    """Advance a stack of waves (rows) one Crank-Nicolson step.

    ``potential`` may be a single (n,) field shared by all rows or one
    field per row, shape (M, n).  Imaginary-time steps renormalize each
    row to unit dx-weighted norm.
    """
    amps = np.atleast_2d(np.asarray(amps, dtype=np.complex128))
    m, n = amps.shape
    pot = np.asarray(potential, dtype=np.float64)
    if not np.all(np.isfinite(pot)):
        raise UnstableStepError("potential contains non-finite entries")
    pot = np.broadcast_to(pot, (m, n))

    z = (0.5 * dt) if imaginary else (0.5j * dt)
    off_h = -0.5 / (mass * dx * dx)
    diag_h = 1.0 / (mass * dx * dx) + pot

    a_diag = 1.0 + z * diag_h
    a_off = complex(z * off_h)
    rhs = (1.0 - z * diag_h) * amps
    rhs[:, 1:] -= (z * off_h) * amps[:, :-1]
    rhs[:, :-1] -= (z * off_h) * amps[:, 1:]

    out = np.empty_like(amps)
    a_diag = np.ascontiguousarray(a_diag, dtype=np.complex128)
    if HAVE_NUMBA:
        _thomas_rows(a_diag, a_off, rhs, out)
    else:
        _thomas_rows_numpy(a_diag, a_off, rhs, out)

    if not np.all(np.isfinite(out)):
        raise UnstableStepError(
            "propagation step produced non-finite amplitudes (dt too large?)")
    if imaginary:
        nrm = np.sqrt(dx * np.sum(np.abs(out) ** 2, axis=1, keepdims=True))
        if np.any(nrm == 0.0):
            raise UnstableStepError("imaginary-time step annihilated a wave")
        out /= nrm
    return out


def step(w: GuideWave, potential: np.ndarray, p: StepParams) -> GuideWave:
    """One propagation step of a single wave under a sampled potential."""
    pot = np.asarray(potential, dtype=np.float64)
    if pot.shape != (w.grid.n,):
        raise ValueError(f"potential shape {pot.shape} != ({w.grid.n},)")
    new = cn_step_batch(w.amplitude[None, :], pot, p.dt, p.mass, w.grid.dx,
                        imaginary=(p.mode == "imaginary_time"))
    return GuideWave(w.grid, new[0])


def kinetic_ratio(amps: np.ndarray, dx: float, mass: float) -> np.ndarray:
    """-(1/2m) lap(w)/w with nodes masked to zero (guarded ratio field)."""
    lap = laplacian_array(amps, dx)
    safe = np.where(np.abs(amps) < NODE_EPS, 1.0, amps)
    ratio = np.where(np.abs(amps) < NODE_EPS, 0.0, lap / safe)
    return -ratio / (2.0 * mass)


def local_energy(w: GuideWave, potential: np.ndarray, x: float,
                 mass: float) -> float:
    """Kinetic curvature ratio at x plus the local potential there."""
    amp_x = interp_array(w.amplitude, w.grid, float(x))
    if abs(amp_x) < NODE_EPS:
        raise NodeError(f"wave amplitude {abs(amp_x):.2e} at x={x} is a node")
    kin = interp_array(kinetic_ratio(w.amplitude, w.grid.dx, mass), w.grid, float(x))
    pot = interp_array(np.asarray(potential, dtype=np.float64), w.grid, float(x))
    return float(np.real(kin) + np.real(pot))


def rayleigh_energy(amps: np.ndarray, potential: np.ndarray, dx: float,
                    mass: float) -> np.ndarray:
    """<w|H|w> per row for unit-norm rows (deterministic, walker-free)."""
    amps = np.atleast_2d(amps)
    lap = laplacian_array(amps, dx)
    h_amp = -lap / (2.0 * mass) + potential * amps
    return dx * np.real(np.sum(np.conj(amps) * h_amp, axis=-1))


def converge_ground(w0: GuideWave, potential_provider, p: StepParams,
                    tol: float = 1e-9, max_steps: int = 20000,
                    window: int = 50):
    """Imaginary-time relaxation until the windowed energy stops moving.

    ``potential_provider(step, wave)`` returns the (possibly wave-dependent)
    potential field for that step.  Stops when consecutive ``window``-step
    energy means differ by less than ``tol``, or immediately on an exact
    fixed point.  Returns (wave, energy trace); raises ConvergenceError
    with the partial trace if the budget runs out.
    """
    if p.mode != "imaginary_time":
        raise ValueError("converge_ground requires imaginary_time mode")
    w = w0.normalize()
    dx = w.grid.dx
    trace = []
    for it in range(max_steps):
        pot = np.asarray(potential_provider(it, w), dtype=np.float64)
        new = cn_step_batch(w.amplitude[None, :], pot, p.dt, p.mass, dx,
                            imaginary=True)[0]
        e = float(rayleigh_energy(new[None, :], pot, dx, p.mass)[0])
        trace.append(e)
        # fixed point: eigenstates pass through the step unchanged
        if np.max(np.abs(new - w.amplitude)) < 1e-14:
            return GuideWave(w.grid, new), np.asarray(trace)
        w = GuideWave(w.grid, new)
        if len(trace) >= 2 * window and it % window == 0:
            prev = np.mean(trace[-2 * window:-window])
            cur = np.mean(trace[-window:])
            if abs(cur - prev) < tol:
                return w, np.asarray(trace)
    raise ConvergenceError(
        f"no convergence after {max_steps} imaginary-time steps "
        f"(last window change {abs(cur - prev) if len(trace) >= 2 * window else float('nan'):.3e})",
        trace=np.asarray(trace))
