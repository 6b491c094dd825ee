"""Finite-temperature time-dependent quantum Monte Carlo in one dimension.

Guide-wave ensembles coupled to Bohmian walkers and a bath of harmonic
oscillators, with an exact-diagonalization thermal reference for
validation.
"""

from .bath import (BathSpec, BathState, CoherentState, Temperature,
                   bath_force_on_system, bath_step_gaussian, bath_step_grid,
                   bath_walker_position, classical_bath_step,
                   detuning_violations, sample_thermal_initial)
from .config import SimConfig, config_from_dict, load_config
from .errors import (BracketError, ConvergenceError, DegenerateEnsembleError,
                     GridMismatchError, NodeError, OutsideGridError,
                     TdqmcError, TruncationError, UnstableStepError)
from .grid import (Grid, GuideWave, gaussian_wave, gradient, inner_product,
                   interpolate, laplacian)
from .observables import (DensityMatrix, build_density_matrix,
                          diagonal_density, dipole_moment, ensemble_energy,
                          thermal_energy_from_dm)
from .oracle import (SpectralDecomposition, diagonalize_1e, diagonalize_2e,
                     thermal_average_energy, thermal_density)
from .potentials import (CouplingMatrix, KernelConfig, PairPotentialParams,
                         SoftCoulombParams, bilinear_coupling,
                         correlation_length, coupling_matrix,
                         effective_potential, gaussian_kernel, pair_potential,
                         soft_coulomb)
from .propagator import StepParams, converge_ground, local_energy, step
from .walkers import (WalkerEnsemble, diffuse, drift_velocity, ensemble_stats,
                      metropolis_resample, rng_stream)

__version__ = "0.1.0"
