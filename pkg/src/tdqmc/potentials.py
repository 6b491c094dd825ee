"""Interaction potentials and the kernel-smeared nonlocal effective potential.

The static potentials (soft Coulomb, pair repulsion, bilinear oscillator
coupling) are pure functions and broadcast over numpy arrays.  The walker
ensemble enters through :func:`effective_potential`, a self-normalizing
kernel average over source-walker positions that sweeps continuously from
the classical pairwise potential (single walker, or sigma -> 0) to the
mean-field average (sigma -> infinity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEnsembleError


@dataclass(frozen=True)
class SoftCoulombParams:
    """Core attraction -depth / sqrt(softening + x^2), atomic units."""

    depth: float = 1.0
    softening: float = 1.0

    def __post_init__(self):
        if self.softening <= 0:
            raise ValueError("softening must be positive")


@dataclass(frozen=True)
class PairPotentialParams:
    """Smoothed pair repulsion strength / sqrt(softening + (x1-x2)^2)."""

    strength: float = 0.2
    softening: float = 1.0

    def __post_init__(self):
        if self.softening <= 0:
            raise ValueError("softening must be positive")


@dataclass(frozen=True)
class KernelConfig:
    """Nonlocal correlation-length rule sigma = max(alpha * std, sigma_floor)."""

    alpha: float = 1.0
    sigma_floor: float = 1e-3
    kernel_kind: str = "gaussian"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        if self.kernel_kind != "gaussian":
            raise ValueError(f"unsupported kernel: {self.kernel_kind}")


def soft_coulomb(x, p: SoftCoulombParams = SoftCoulombParams()):
    return -p.depth / np.sqrt(p.softening + np.square(x))


def pair_potential(x1, x2, p: PairPotentialParams = PairPotentialParams()):
    return p.strength / np.sqrt(p.softening + np.square(np.subtract(x1, x2)))


def bilinear_coupling(x, X, omega: float, mass: float, c: float):
    """Oscillator energy (m w^2 / 2) X^2 plus linear coupling c x X."""
    if omega <= 0 or mass <= 0:
        raise ValueError("omega and mass must be positive")
    return 0.5 * mass * omega ** 2 * np.square(X) + c * np.multiply(x, X)


def gaussian_kernel(r, sigma: float):
    """Unnormalized Gaussian weight; only ever used inside ratios."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(-np.square(r) / (2.0 * sigma ** 2))


def correlation_length(walkers, cfg: KernelConfig) -> float:
    """Kernel width from the sample spread, clamped below by sigma_floor."""
    walkers = np.asarray(walkers, dtype=np.float64)
    if walkers.size < 2:
        raise DegenerateEnsembleError(
            f"correlation length needs >= 2 walkers, got {walkers.size}")
    return max(cfg.alpha * float(np.std(walkers, ddof=1)), cfg.sigma_floor)


def effective_potential(x_eval, source_walkers, k: int, sigma_k: float, V):
    """Kernel-weighted average of V(x, r_l) around source walker k.

    Parameters
    ----------
    x_eval : array of evaluation positions (the target species' grid).
    source_walkers : positions r_l of the source species, length M.
    k : index of the walker whose neighborhood sets the weights.
    sigma_k : kernel width for that walker.
    V : callable V(x, r) broadcasting over both arguments.

    The self term guarantees a weight sum >= 1, so the ratio is always
    well defined.
    """
    src = np.asarray(source_walkers, dtype=np.float64)
    if src.size == 0:
        raise ValueError("source_walkers must be non-empty")
    x_eval = np.asarray(x_eval, dtype=np.float64)
    w = gaussian_kernel(src - src[k], sigma_k)
    vmat = V(x_eval[:, None], src[None, :])
    return vmat @ w / np.sum(w)


def effective_potential_ensemble(x_eval, source_walkers, sigma: float, V) -> np.ndarray:
    """effective_potential for every walker k at once; returns (M, n).

    Row k equals effective_potential(x_eval, source_walkers, k, sigma, V);
    this is the batched form used by the propagation loop, where the walker
    axis is the parallel axis.
    """
    src = np.asarray(source_walkers, dtype=np.float64)
    x_eval = np.asarray(x_eval, dtype=np.float64)
    w = gaussian_kernel(src[:, None] - src[None, :], sigma)   # (l, k)
    vmat = V(x_eval[:, None], src[None, :])                   # (n, l)
    return (vmat @ (w / np.sum(w, axis=0))).T


@dataclass
class CouplingMatrix:
    """Per-(oscillator, species) coupling strengths with one global knob."""

    c: np.ndarray          # (L, N)
    scale: float = 1.0

    def __post_init__(self):
        self.c = np.atleast_2d(np.asarray(self.c, dtype=np.float64))
        if not np.all(np.isfinite(self.c)):
            raise ValueError("coupling entries must be finite")
        if self.scale < 0:
            raise ValueError("scale must be >= 0")

    @property
    def strengths(self) -> np.ndarray:
        return self.scale * self.c

    def with_scale(self, scale: float) -> "CouplingMatrix":
        return CouplingMatrix(self.c, scale)


def coupling_matrix(frequencies, masses, n_species: int, scale: float = 1.0,
                    shape: str = "omega") -> CouplingMatrix:
    """Build the default coupling matrix.

    shape="omega" uses c_j = sqrt(M_j) Omega_j / sqrt(L), which keeps the
    total bath back-action bounded as L grows.  shape="flat" replaces
    Omega_j by max(Omega), weighting all oscillators equally so the slow,
    thermally occupied modes dominate the force fluctuations; the dipole
    relaxation runs use it.
    """
    om = np.asarray(frequencies, dtype=np.float64)
    m = np.broadcast_to(np.asarray(masses, dtype=np.float64), om.shape)
    L = om.size
    if shape == "omega":
        col = np.sqrt(m) * om / np.sqrt(L)
    elif shape == "flat":
        col = np.sqrt(m) * om.max() / np.sqrt(L)
        col = np.broadcast_to(col, om.shape).copy()
    else:
        raise ValueError(f"unknown coupling shape: {shape}")
    return CouplingMatrix(np.repeat(col[:, None], n_species, axis=1), scale)
