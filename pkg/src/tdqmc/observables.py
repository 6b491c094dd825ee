"""Density matrix from the guide-wave ensemble and derived observables.

The mixed state of a species is the uniform mixture of its M guide waves;
everything measurable here (diagonal density, dipole, purity, energy)
derives from that mixture.  Observables that only need the diagonal use
streaming accumulation over waves; the dense matrix is materialized on
demand only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GridMismatchError, NodeError
from .grid import NODE_EPS, Grid, GuideWave, interp_rows, laplacian_array
from .propagator import kinetic_ratio


@dataclass
class DensityMatrix:
    """Coordinate-space density matrix rho(x, x') on a grid."""

    grid: Grid
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.complex128)
        if rho.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"rho shape {rho.shape} != grid size {self.grid.n}")
        self.rho = rho

    def trace(self) -> float:
        return float(self.grid.dx * np.real(np.trace(self.rho)))

    def purity(self) -> float:
        """Tr(rho^2) dx^2; 1 for a pure state, 1/M for an even mixture."""
        return float(self.grid.dx ** 2 * np.sum(np.abs(self.rho) ** 2))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self, stride: int = 4) -> float:
        """Smallest eigenvalue of a downsampled copy (PSD spot check)."""
        sub = self.rho[::stride, ::stride]
        return float(np.linalg.eigvalsh(sub).min() * self.grid.dx)


def _stack(waves: Sequence[GuideWave] | np.ndarray,
           grid: Grid | None) -> tuple[Grid, np.ndarray]:
    if isinstance(waves, np.ndarray):
        if grid is None:
            raise ValueError("grid required when passing a raw wave stack")
        return grid, np.atleast_2d(waves)
    g = waves[0].grid
    for w in waves:
        if w.grid != g:
            raise GridMismatchError("waves live on different grids")
    return g, np.stack([w.amplitude for w in waves])


def build_density_matrix(waves: Sequence[GuideWave] | np.ndarray,
                         grid: Grid | None = None) -> DensityMatrix:
    """Uniform mixture rho(x, x') = (1/M) sum_k w_k*(x) w_k(x')."""
    g, stack = _stack(waves, grid)
    rho = stack.conj().T @ stack / stack.shape[0]
    return DensityMatrix(g, rho)


def diagonal_density(rho: DensityMatrix) -> np.ndarray:
    """Real nonnegative diagonal rho(x, x); integrates to the trace."""
    return np.real(np.diag(rho.rho)).copy()


def diagonal_density_from_stack(stack: np.ndarray) -> np.ndarray:
    """Streaming diagonal: mean |w_k(x)|^2 over waves, no dense matrix."""
    return np.mean(np.abs(np.atleast_2d(stack)) ** 2, axis=0)


def dipole_moment(rho: DensityMatrix) -> float:
    """<x> = Tr(x rho) from the diagonal."""
    return float(rho.grid.dx * np.sum(rho.grid.points * diagonal_density(rho)))


def dipole_from_stack(stack: np.ndarray, grid: Grid) -> float:
    return float(grid.dx * np.sum(grid.points
                                  * diagonal_density_from_stack(stack)))


def ensemble_energy(positions: np.ndarray, wave_stacks: Sequence[np.ndarray],
                    grid: Grid, masses: Sequence[float],
                    static_potentials: Sequence, pair=None) -> float:
    """Walker-averaged total energy.

    For every walker k: kinetic curvature of each species' own wave at the
    walker position, plus the static potential there, plus the pair term
    V(r_i^k, r_j^k) once per species pair.

    Parameters
    ----------
    positions : (M, N) walker positions.
    wave_stacks : per species, (M, n) amplitudes (walker k owns row k).
    static_potentials : per species, callable V(x).
    pair : callable V(x1, x2) applied to same-walker cross-species pairs.
    """
    pos = np.atleast_2d(positions)
    m, n_species = pos.shape
    total = np.zeros(m)
    for i in range(n_species):
        stack = np.atleast_2d(wave_stacks[i])
        amp_at = interp_rows(stack, grid, pos[:, i])
        if np.any(np.abs(amp_at) < NODE_EPS):
            k_bad = int(np.argmin(np.abs(amp_at)))
            raise NodeError(
                f"wave of species {i}, walker {k_bad} is a node at its walker")
        kin = kinetic_ratio(stack, grid.dx, masses[i])
        total += np.real(interp_rows(kin, grid, pos[:, i]))
        total += static_potentials[i](pos[:, i])
    if pair is not None:
        for i in range(n_species):
            for j in range(i + 1, n_species):
                total += pair(pos[:, i], pos[:, j])
    return float(np.mean(total))


def thermal_energy_from_dm(rho: DensityMatrix, hamiltonian_apply) -> float:
    """<E> = Tr(rho H) with H supplied as a matrix-free row action."""
    dx = rho.grid.dx
    acc = 0.0
    for a in range(rho.grid.n):
        acc += np.real(hamiltonian_apply(rho.rho[a, :])[a])
    return float(dx * acc)


def hamiltonian_apply_factory(grid: Grid, potential: np.ndarray,
                              mass: float = 1.0):
    """Row action of the discretized one-body Hamiltonian."""
    pot = np.asarray(potential, dtype=np.float64)

    def apply(vec: np.ndarray) -> np.ndarray:
        return -laplacian_array(np.asarray(vec), grid.dx) / (2.0 * mass) \
            + pot * vec

    return apply
