import numpy as np
import pytest

from tdqmc.errors import ConvergenceError, NodeError, UnstableStepError
from tdqmc.grid import Grid, GuideWave, gaussian_wave
from tdqmc.potentials import SoftCoulombParams, soft_coulomb
from tdqmc.propagator import (StepParams, cn_step_batch, converge_ground,
                              local_energy, rayleigh_energy, step)

HO = lambda g: 0.5 * g.points**2


@pytest.fixture
def grid():
    return Grid(-10.0, 10.0, 401)


def random_wave(grid, seed=0):
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=grid.n) + 1j * rng.normal(size=grid.n)
    amp *= np.exp(-0.05 * grid.points**2)
    return GuideWave(grid, amp).normalize()


def test_step_params_validation():
    with pytest.raises(ValueError):
        StepParams(-0.1, 1.0)
    with pytest.raises(ValueError):
        StepParams(0.1, 1.0, "sideways_time")


def test_real_time_unitarity(grid):
    w = random_wave(grid)
    p = StepParams(0.02, 1.0, "real_time")
    for pot in (np.zeros(grid.n), HO(grid), soft_coulomb(grid.points)):
        cur = w
        for _ in range(50):
            cur = step(cur, pot, p)
        assert abs(cur.norm() - 1.0) < 1e-12


def test_real_time_reversibility(grid):
    w = random_wave(grid, seed=2)
    pot = soft_coulomb(grid.points)
    fwd = cn_step_batch(w.amplitude[None, :], pot, 0.02, 1.0, grid.dx, False)
    back = cn_step_batch(fwd, pot, -0.02, 1.0, grid.dx, False)
    assert np.max(np.abs(back[0] - w.amplitude)) < 1e-9


def test_imaginary_time_ho_energy(grid):
    # 2000 steps at dt=0.01 from a random start must land on the HO ground
    w = random_wave(grid, seed=4)
    p = StepParams(0.01, 1.0, "imaginary_time")
    pot = HO(grid)
    for _ in range(2000):
        w = step(w, pot, p)
    e = local_energy(w, pot, 0.37, 1.0)
    assert e == pytest.approx(0.5, abs=1e-3)


def test_imaginary_energy_monotone_after_transient(grid):
    w = GuideWave(grid, np.where(np.abs(grid.points) < 4, 1.0, 0.0).astype(complex)).normalize()
    pot = HO(grid)
    energies = []
    amp = w.amplitude[None, :]
    for _ in range(400):
        amp = cn_step_batch(amp, pot, 0.01, 1.0, grid.dx, True)
        energies.append(rayleigh_energy(amp, pot, grid.dx, 1.0)[0])
    diffs = np.diff(energies[20:])
    assert np.all(diffs < 1e-12)
    assert energies[-1] == pytest.approx(0.5, abs=1e-3)


def test_soft_coulomb_ground_energy(grid):
    # quoted ground level of the model atom
    w = gaussian_wave(grid, width=1.5)
    pot = soft_coulomb(grid.points, SoftCoulombParams())
    p = StepParams(0.01, 1.0, "imaginary_time")
    w, trace = converge_ground(w, lambda i, _: pot, p, tol=1e-10,
                               max_steps=6000)
    assert trace[-1] == pytest.approx(-0.669, abs=2e-3)


def test_second_order_accuracy_driven_ho():
    # displaced coherent state in a driven harmonic well: <x>(t) follows the
    # classical driven oscillator exactly, so the fixed-horizon error against
    # that reference isolates the integrator's O(dt^2) phase error
    g = Grid(-12.0, 12.0, 2401)
    omega, e0, wd, x0 = 1.0, 0.08, 0.6, 1.0

    import scipy.integrate as si
    sol = si.solve_ivp(
        lambda t, y: [y[1], -omega**2 * y[0] - e0 * np.sin(wd * t)],
        (0, 4.0), [x0, 0.0], rtol=1e-12, atol=1e-14)
    ref = sol.y[0, -1]

    def run(dt, T=4.0):
        w = gaussian_wave(g, center=x0, width=1.0 / np.sqrt(2.0))
        p = StepParams(dt, 1.0, "real_time")
        for i in range(int(round(T / dt))):
            t_half = (i + 0.5) * dt
            pot = 0.5 * omega**2 * g.points**2 \
                + e0 * np.sin(wd * t_half) * g.points
            w = step(w, pot, p)
        dens = np.abs(w.amplitude) ** 2
        return g.dx * np.sum(g.points * dens)

    errs = [abs(run(dt) - ref) for dt in (0.1, 0.05, 0.025)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)


def test_local_energy_eigenstate_constant(grid):
    pot = HO(grid)
    w = gaussian_wave(grid, width=1.0 / np.sqrt(2.0))
    p = StepParams(0.01, 1.0, "imaginary_time")
    for _ in range(600):
        w = step(w, pot, p)
    vals = [local_energy(w, pot, x, 1.0) for x in (-2.0, -0.5, 0.0, 1.3, 3.1)]
    np.testing.assert_allclose(vals, vals[0], atol=1e-6)
    assert vals[0] == pytest.approx(0.5, abs=1e-3)


def test_local_energy_gaussian_closed_form(grid):
    # free Gaussian: -(1/2m) w''/w = -(1/2m)(x^2/4s^4 - 1/(2s^2))
    s, mass = 1.3, 2.0
    w = gaussian_wave(grid, width=s)
    zero = np.zeros(grid.n)
    for x in (0.0, 0.8, -1.7):
        expect = -(x**2 / (4 * s**4) - 1.0 / (2 * s**2)) / (2 * mass)
        assert local_energy(w, zero, x, mass) == pytest.approx(expect, abs=1e-4)


def test_local_energy_node_error(grid):
    w = GuideWave(grid, (grid.points * np.exp(-grid.points**2)).astype(complex)).normalize()
    with pytest.raises(NodeError):
        local_energy(w, np.zeros(grid.n), 0.0, 1.0)


def test_converge_ground_fixed_point(grid):
    pot = HO(grid)
    w0 = gaussian_wave(grid, width=1.0 / np.sqrt(2.0))
    p = StepParams(0.01, 1.0, "imaginary_time")
    for _ in range(2000):
        w0 = step(w0, pot, p)
    w, trace = converge_ground(w0, lambda i, _: pot, p, tol=1e-9, max_steps=500)
    assert len(trace) <= 50
    assert trace[-1] == pytest.approx(0.5, abs=1e-3)


def test_converge_ground_budget_error(grid):
    pot = HO(grid)
    p = StepParams(0.01, 1.0, "imaginary_time")
    with pytest.raises(ConvergenceError) as ei:
        converge_ground(random_wave(grid, 8), lambda i, _: pot, p,
                        tol=1e-14, max_steps=120)
    assert ei.value.trace is not None and len(ei.value.trace) == 120


def test_unstable_potential_rejected(grid):
    w = random_wave(grid)
    pot = np.zeros(grid.n)
    pot[5] = np.inf
    with pytest.raises(UnstableStepError):
        step(w, pot, StepParams(0.01, 1.0, "imaginary_time"))
