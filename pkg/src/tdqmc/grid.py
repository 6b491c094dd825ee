"""Uniform 1D spatial grid, complex fields on it, and the discrete calculus.

All wavefunctions live on a :class:`Grid` with Dirichlet boundaries: the
field is taken to vanish on the first ghost point beyond each edge.  The
second-order stencils below are what every propagation and measurement
routine in the package consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, OutsideGridError

#: amplitudes below this are treated as nodes by ratio-based evaluators
NODE_EPS = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``n`` points on [x_min, x_max]."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"grid needs n >= 3 points, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError(f"empty box: x_max={self.x_max} <= x_min={self.x_min}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    def contains(self, x) -> np.ndarray:
        return (x >= self.x_min) & (x <= self.x_max)


@dataclass
class GuideWave:
    """Complex amplitude field on a grid; one per walker per species."""

    grid: Grid
    amplitude: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=np.complex128)
        if amp.shape != (self.grid.n,):
            raise ValueError(f"amplitude shape {amp.shape} != ({self.grid.n},)")
        self.amplitude = amp

    def norm(self) -> float:
        return float(np.sqrt(self.grid.dx * np.sum(np.abs(self.amplitude) ** 2)))

    def normalize(self) -> "GuideWave":
        """Return a copy scaled to unit L2 norm (idempotent)."""
        nrm = self.norm()
        if nrm == 0.0 or not np.isfinite(nrm):
            raise ValueError("cannot normalize a zero or non-finite wave")
        return GuideWave(self.grid, self.amplitude / nrm)

    def copy(self) -> "GuideWave":
        return GuideWave(self.grid, self.amplitude.copy())


def gaussian_wave(grid: Grid, center: float = 0.0, width: float = 1.0,
                  momentum: float = 0.0) -> GuideWave:
    """Normalized Gaussian packet, ground-width convention <x^2> = width^2."""
    x = grid.points
    amp = np.exp(-((x - center) ** 2) / (4.0 * width ** 2) + 1j * momentum * x)
    return GuideWave(grid, amp).normalize()


# ---------------------------------------------------------------------------
# array kernels (broadcast over leading axes; last axis is the grid)
# ---------------------------------------------------------------------------

def laplacian_array(amp: np.ndarray, dx: float) -> np.ndarray:
    """Second-order central Laplacian with zero beyond both edges."""
    out = np.empty_like(amp)
    out[..., 1:-1] = amp[..., 2:] - 2.0 * amp[..., 1:-1] + amp[..., :-2]
    out[..., 0] = amp[..., 1] - 2.0 * amp[..., 0]
    out[..., -1] = amp[..., -2] - 2.0 * amp[..., -1]
    out /= dx * dx
    return out


def gradient_array(amp: np.ndarray, dx: float) -> np.ndarray:
    """Central first derivative, one-sided at the edges."""
    out = np.empty_like(amp)
    out[..., 1:-1] = (amp[..., 2:] - amp[..., :-2]) / (2.0 * dx)
    out[..., 0] = (amp[..., 1] - amp[..., 0]) / dx
    out[..., -1] = (amp[..., -1] - amp[..., -2]) / dx
    return out


def interp_weights(grid: Grid, x) -> tuple[np.ndarray, np.ndarray]:
    """Bracketing node index and fractional offset for linear interpolation.

    Raises OutsideGridError if any position is outside the box.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(grid.contains(x)):
        bad = np.asarray(x)[~grid.contains(x)]
        raise OutsideGridError(
            f"position(s) {bad.ravel()[:4]} outside box [{grid.x_min}, {grid.x_max}]")
    t = (x - grid.x_min) / grid.dx
    idx = np.minimum(t.astype(np.int64), grid.n - 2)
    frac = t - idx
    return idx, frac


def interp_array(amp: np.ndarray, grid: Grid, x):
    """Linear interpolation of a field (shape (n,)) at scalar or array x."""
    idx, frac = interp_weights(grid, x)
    return amp[..., idx] * (1.0 - frac) + amp[..., idx + 1] * frac


def interp_rows(amps: np.ndarray, grid: Grid, xs: np.ndarray) -> np.ndarray:
    """Row-wise interpolation: row k of ``amps`` evaluated at xs[k]."""
    idx, frac = interp_weights(grid, xs)
    rows = np.arange(amps.shape[0])
    return amps[rows, idx] * (1.0 - frac) + amps[rows, idx + 1] * frac


# ---------------------------------------------------------------------------
# public single-wave operations
# ---------------------------------------------------------------------------

def laplacian(w: GuideWave) -> np.ndarray:
    return laplacian_array(w.amplitude, w.grid.dx)


def gradient(w: GuideWave) -> np.ndarray:
    return gradient_array(w.amplitude, w.grid.dx)


def inner_product(a: GuideWave, b: GuideWave) -> complex:
    """dx-weighted inner product <a|b>; grids must match."""
    if a.grid != b.grid:
        raise GridMismatchError(f"incompatible grids: {a.grid} vs {b.grid}")
    return complex(a.grid.dx * np.sum(np.conj(a.amplitude) * b.amplitude))


def interpolate(w: GuideWave, x: float) -> complex:
    """Linear interpolation of the amplitude at position x inside the box."""
    return complex(interp_array(w.amplitude, w.grid, float(x)))
