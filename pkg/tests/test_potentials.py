import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdqmc.errors import DegenerateEnsembleError
from tdqmc.potentials import (CouplingMatrix, KernelConfig,
                              PairPotentialParams, SoftCoulombParams,
                              bilinear_coupling, correlation_length,
                              coupling_matrix, effective_potential,
                              effective_potential_ensemble, gaussian_kernel,
                              pair_potential, soft_coulomb)

P_SOFT = SoftCoulombParams()
P_PAIR = PairPotentialParams()


def test_soft_coulomb_values():
    assert soft_coulomb(0.0, P_SOFT) == pytest.approx(-1.0)
    assert soft_coulomb(1.0, P_SOFT) == pytest.approx(-1.0 / np.sqrt(2.0))
    x = np.array([5.0, 20.0, 100.0, 1000.0])
    v = soft_coulomb(x, P_SOFT)
    assert np.all(v < 0) and np.all(np.diff(v) > 0)   # rises toward 0-


def test_pair_potential_values():
    assert pair_potential(0.3, 0.3, P_PAIR) == pytest.approx(0.2)
    assert pair_potential(1.0, -1.0, P_PAIR) == pytest.approx(0.2 / np.sqrt(5.0))
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=20), rng.normal(size=20)
    np.testing.assert_allclose(pair_potential(a, b, P_PAIR),
                               pair_potential(b, a, P_PAIR))


def test_bilinear_coupling_values():
    assert bilinear_coupling(0.7, 2.0, 0.5, 1.0, 0.0) == pytest.approx(0.5)
    assert bilinear_coupling(0.0, 2.0, 0.5, 1.0, 0.3) == pytest.approx(0.5)
    assert bilinear_coupling(1.0, 2.0, 0.5, 1.0, 0.1) == pytest.approx(0.7)


def test_gaussian_kernel_limits():
    assert gaussian_kernel(0.0, 0.4) == pytest.approx(1.0)
    assert gaussian_kernel(0.4, 0.4) == pytest.approx(np.exp(-0.5))
    assert gaussian_kernel(3.0, 1e9) == pytest.approx(1.0)


def test_correlation_length():
    cfg = KernelConfig(alpha=1.0, sigma_floor=1e-3)
    assert correlation_length([0.7] * 12, cfg) == pytest.approx(1e-3)
    assert correlation_length([-1.0, 1.0], cfg) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(DegenerateEnsembleError):
        correlation_length([0.0], cfg)


def test_correlation_length_statistical():
    rng = np.random.default_rng(42)
    sample = rng.standard_normal(100_000)
    cfg = KernelConfig(alpha=0.5)
    assert correlation_length(sample, cfg) == pytest.approx(0.5, rel=0.01)


def test_effective_potential_single_walker_is_classical():
    x = np.linspace(-5, 5, 101)
    r = 0.83
    v = effective_potential(x, [r], 0, 0.7, lambda a, b: pair_potential(a, b, P_PAIR))
    np.testing.assert_allclose(v, pair_potential(x, r, P_PAIR), atol=1e-14)


def test_effective_potential_hartree_limit():
    rng = np.random.default_rng(1)
    src = rng.normal(size=40)
    x = np.linspace(-5, 5, 101)
    pair = lambda a, b: pair_potential(a, b, P_PAIR)
    v = effective_potential(x, src, 7, 1e9, pair)
    hartree = np.mean(pair(x[:, None], src[None, :]), axis=1)
    np.testing.assert_allclose(v, hartree, rtol=1e-9)


def test_effective_potential_brute_force_oracle():
    # independent re-implementation of the weighted double loop
    src = np.array([-1.4, -0.2, 0.1, 0.9, 2.3])
    x = np.linspace(-4, 4, 41)
    sigma, k = 0.7, 2
    pair = lambda a, b: pair_potential(a, b, P_PAIR)
    expect = np.zeros_like(x)
    z = 0.0
    for rl in src:
        z += np.exp(-((rl - src[k]) ** 2) / (2 * sigma**2))
    for i, xi in enumerate(x):
        acc = 0.0
        for rl in src:
            acc += pair(xi, rl) * np.exp(-((rl - src[k]) ** 2) / (2 * sigma**2))
        expect[i] = acc / z
    np.testing.assert_allclose(effective_potential(x, src, k, sigma, pair),
                               expect, rtol=1e-12)


def test_effective_potential_ensemble_matches_per_walker():
    rng = np.random.default_rng(9)
    src = rng.normal(size=17)
    x = np.linspace(-3, 3, 31)
    pair = lambda a, b: pair_potential(a, b, P_PAIR)
    batch = effective_potential_ensemble(x, src, 0.5, pair)
    for k in range(len(src)):
        np.testing.assert_allclose(batch[k],
                                   effective_potential(x, src, k, 0.5, pair),
                                   rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_effective_potential_permutation_and_bounds(seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=9)
    x = np.linspace(-2, 2, 11)
    pair = lambda a, b: pair_potential(a, b, P_PAIR)
    k = int(rng.integers(0, 9))
    v = effective_potential(x, src, k, 0.6, pair)
    perm = rng.permutation(9)
    v2 = effective_potential(x, src[perm], int(np.where(perm == k)[0][0]),
                             0.6, pair)
    np.testing.assert_allclose(v, v2, rtol=1e-10)
    vmat = pair(x[:, None], src[None, :])
    assert np.all(v >= vmat.min(axis=1) - 1e-12)
    assert np.all(v <= vmat.max(axis=1) + 1e-12)


def test_effective_potential_sigma_sweep_monotone_toward_hartree():
    rng = np.random.default_rng(3)
    src = rng.normal(size=30)
    x = np.linspace(-3, 3, 61)
    pair = lambda a, b: pair_potential(a, b, P_PAIR)
    hartree = np.mean(pair(x[:, None], src[None, :]), axis=1)
    local = effective_potential(x, src, 4, 1e-3, pair)
    # below the inter-walker spacing the kernel sees only the self term, so
    # sample sigmas from that plateau upward
    dists = []
    for sigma in (0.3, 1.0, 3.0, 30.0, 1e9):
        v = effective_potential(x, src, 4, sigma, pair)
        dists.append(np.linalg.norm(v - hartree))
    assert all(a >= b - 1e-12 for a, b in zip(dists, dists[1:]))
    assert dists[0] < np.linalg.norm(local - hartree)
    assert dists[-1] < 1e-8


def test_coupling_matrix_builders():
    freqs = np.arange(1, 9) * 0.6 / 8
    cm = coupling_matrix(freqs, 1.0, 2, scale=0.5, shape="omega")
    assert cm.c.shape == (8, 2)
    np.testing.assert_allclose(cm.strengths[:, 0],
                               0.5 * freqs / np.sqrt(8.0))
    flat = coupling_matrix(freqs, 1.0, 1, scale=1.0, shape="flat")
    assert np.ptp(flat.strengths) == 0.0
    with pytest.raises(ValueError):
        coupling_matrix(freqs, 1.0, 1, shape="nope")
    with pytest.raises(ValueError):
        CouplingMatrix(np.ones((3, 1)), scale=-0.1)
