"""Exact reference results from direct Hamiltonian diagonalization.

The one-particle path is a dense symmetric tridiagonal eigensolve; the
two-particle path extracts the lowest eigenpairs of the product-grid
Hamiltonian with a matrix-free Lanczos iteration.  Boltzmann-weighted
densities and averages from these spectra are the validation targets for
the stochastic engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import ConvergenceError, TruncationError
from .grid import Grid
from .potentials import PairPotentialParams, pair_potential


@dataclass
class SpectralDecomposition:
    """Ascending eigenpairs, states orthonormal under the dx-weighted product."""

    grid: Grid
    energies: np.ndarray
    states: np.ndarray       # (m, n) for one particle, (m, n, n) for two
    ndim: int = 1

    def __post_init__(self):
        if np.any(np.diff(self.energies) < 0):
            raise ValueError("energies must be ascending")


def _sample_potential(grid: Grid, potential) -> np.ndarray:
    pot = potential(grid.points) if callable(potential) else np.asarray(potential)
    if pot.shape != (grid.n,):
        raise ValueError(f"potential shape {pot.shape} != ({grid.n},)")
    return pot.astype(np.float64)


def diagonalize_1e(grid: Grid, potential, mass: float = 1.0,
                   cutoff: float = 1.0) -> SpectralDecomposition:
    """All eigenpairs of the tridiagonal Hamiltonian below ``cutoff``."""
    pot = _sample_potential(grid, potential)
    dx = grid.dx
    diag = 1.0 / (mass * dx * dx) + pot
    off = np.full(grid.n - 1, -0.5 / (mass * dx * dx))
    vals, vecs = eigh_tridiagonal(diag, off, select="v",
                                  select_range=(float(pot.min()) - 1.0, cutoff))
    if vals.size == 0:
        raise ConvergenceError("no eigenpairs found below the cutoff")
    return SpectralDecomposition(grid, vals, (vecs / math.sqrt(dx)).T, ndim=1)


def diagonalize_2e(grid: Grid, potential, pair: PairPotentialParams,
                   k: int = 12, mass: float = 1.0) -> SpectralDecomposition:
    """Lowest-k eigenpairs of H = h(x1) + h(x2) + V_pair(x1 - x2).

    Matrix-free Lanczos on the n^2 product grid; keep n moderate
    (n <= ~400) so the iteration stays fast.
    """
    pot = _sample_potential(grid, potential)
    n, dx = grid.n, grid.dx
    off = -0.5 / (mass * dx * dx)
    vpair = pair_potential(grid.points[:, None], grid.points[None, :], pair)
    vdiag = pot[:, None] + pot[None, :] + vpair + 2.0 / (mass * dx * dx)

    def apply(psi):
        p = psi.reshape(n, n)
        out = vdiag * p
        out[1:, :] += off * p[:-1, :]
        out[:-1, :] += off * p[1:, :]
        out[:, 1:] += off * p[:, :-1]
        out[:, :-1] += off * p[:, 1:]
        return out.ravel()

    op = LinearOperator((n * n, n * n), matvec=apply, dtype=np.float64)
    try:
        vals, vecs = eigsh(op, k=k, which="SA")
    except ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"Lanczos stagnation: {len(exc.eigenvalues)} of {k} pairs "
            f"converged") from exc
    order = np.argsort(vals)
    states = (vecs[:, order].T / dx).reshape(len(order), n, n)
    return SpectralDecomposition(grid, vals[order], states, ndim=2)


def _boltzmann_weights(dec: SpectralDecomposition, beta: float,
                       max_truncation_weight: float) -> np.ndarray:
    e = dec.energies
    if math.isinf(beta):
        w = np.zeros_like(e)
        w[0] = 1.0
        return w
    tail = math.exp(-beta * (e[-1] - e[0]))
    if tail >= max_truncation_weight:
        raise TruncationError(
            f"highest retained state carries weight {tail:.3e} "
            f">= {max_truncation_weight:.1e} at beta={beta}; raise the "
            f"diagonalization cutoff or retain more states", weight=tail)
    w = np.exp(-beta * (e - e[0]))
    return w / w.sum()


def thermal_density(dec: SpectralDecomposition, beta: float,
                    max_truncation_weight: float = 1e-6) -> np.ndarray:
    """Normalized diagonal density at inverse temperature beta.

    Two-particle decompositions are reduced to a single coordinate by
    integrating out the partner.
    """
    w = _boltzmann_weights(dec, beta, max_truncation_weight)
    if dec.ndim == 1:
        return np.tensordot(w, np.abs(dec.states) ** 2, axes=1)
    per_state = np.sum(np.abs(dec.states) ** 2, axis=2) * dec.grid.dx
    return np.tensordot(w, per_state, axes=1)


def thermal_average_energy(dec: SpectralDecomposition, beta: float,
                           max_truncation_weight: float = 1e-6) -> float:
    """Boltzmann-weighted mean of the retained energies."""
    w = _boltzmann_weights(dec, beta, max_truncation_weight)
    return float(np.dot(w, dec.energies))


def ho_thermal_density_exact(x, beta: float, omega: float = 1.0,
                             mass: float = 1.0) -> np.ndarray:
    """Closed-form harmonic-oscillator thermal diagonal density."""
    a = mass * omega * (1.0 if math.isinf(beta) else math.tanh(beta * omega / 2.0))
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(a / np.pi) * np.exp(-a * x * x)


def ho_thermal_energy_exact(beta: float, omega: float = 1.0) -> float:
    """Omega (n_bar + 1/2)."""
    if math.isinf(beta):
        return 0.5 * omega
    return 0.5 * omega / math.tanh(beta * omega / 2.0)
