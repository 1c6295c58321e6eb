import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nvecho.distributions import (NON_ORTH_WEIGHT, FrequencyDensity, biexp_strain_pdf, biexp_strain_sample,
                                  bin_to_grid, combine_families, ensemble_density, frequency_density,
                                  lorentzian_density, lorentzian_mass, lorentzian_pdf, window_mass)
from nvecho.params import DistributionSpec, NVParams, ValidationError
from nvecho.units import TWO_PI

NV = NVParams()
SPEC = DistributionSpec()


@pytest.fixture(scope="module")
def orth0():
    return frequency_density(0.0, SPEC, NV, "orth")


def test_lorentzian_helpers():
    assert integrate.quad(lorentzian_pdf, -np.inf, np.inf, args=(2.0,))[0] == pytest.approx(1.0, rel=1e-10)
    assert lorentzian_mass(1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        lorentzian_pdf(0.0, 0.0)


def test_biexp_strain_normalized_and_sampled():
    E1, E2, A1 = 0.5, 10.0, 0.2
    assert integrate.quad(biexp_strain_pdf, 0, np.inf, args=(E1, E2, A1))[0] == pytest.approx(1.0, rel=1e-10)
    mean = integrate.quad(lambda e: e * biexp_strain_pdf(e, E1, E2, A1), 0, np.inf)[0]
    x = biexp_strain_sample(np.random.default_rng(1), 400_000, E1, E2, A1)
    assert x.min() >= 0
    assert x.mean() == pytest.approx(mean, rel=0.02)
    with pytest.raises(ValueError):
        biexp_strain_pdf(-1.0, E1, E2, A1)


def test_density_normalized(orth0):
    assert orth0.integral() == pytest.approx(1.0, abs=1e-3)
    assert np.all(orth0.density >= 0)
    assert 0.9 < orth0.captured <= 1.0


def test_zero_field_density_symmetric_about_D():
    # plus and minus branches mirror each other on an axis centred on D
    w = NV.D + TWO_PI * 50e3 * np.arange(-1200, 1201)
    d = frequency_density(0.0, SPEC, NV, "orth", omega=w).density
    assert np.allclose(d, d[::-1], rtol=1e-9, atol=0)


def test_field_moves_weight_out_of_center(orth0):
    o = frequency_density(1.5e-3, SPEC, NV, "non_orth")
    assert o.integral() == pytest.approx(1.0, abs=1e-3)
    center = lambda d: window_mass(d, NV.D, TWO_PI * 4e6)
    assert center(o) < 0.5 * center(orth0)


def test_refinement_budget_checked():
    with pytest.raises(ValidationError):
        frequency_density(0.0, SPEC, NV, "orth", max_refine=0)
    with pytest.raises(ValidationError):
        frequency_density(0.0, SPEC, NV, "orth", omega=np.array([1.0, 2.0, 4.0]))


def test_combine_families_weights(orth0):
    w = orth0.omega
    lo = lorentzian_density(w, NV.D + TWO_PI * 20e6, TWO_PI * 1e6)
    comb = combine_families(orth0, lo)
    expect = (NON_ORTH_WEIGHT * lo.density + orth0.density) / (NON_ORTH_WEIGHT + 1.0)
    assert comb.integral() == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(comb.density, expect, rtol=1e-3, atol=1e-6 * expect.max())
    with pytest.raises(ValidationError):
        combine_families(orth0, lorentzian_density(w[:-1], NV.D, 1e6))


def test_ensemble_density_zero_field(orth0):
    e = ensemble_density(0.0, SPEC, NV)
    assert np.allclose(e.density, orth0.density, rtol=1e-12)


def _line(n=2001):
    w = np.linspace(-TWO_PI * 50e6, TWO_PI * 50e6, n) + TWO_PI * 2.88e9
    return lorentzian_density(w, TWO_PI * 2.88e9, TWO_PI * 3e6)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8), st.floats(1e3, 1e8))
def test_bin_to_grid_invariants(M, gvals, g_ens):
    rng = np.random.default_rng(len(gvals))
    g = np.array(gvals)
    N = rng.uniform(0.1, 10.0, g.size)
    grid = bin_to_grid(_line(), M, (g, N), g_ens, span=TWO_PI * 40e6)
    assert grid.size == M * g.size
    assert grid.g_ens == pytest.approx(g_ens, rel=1e-9)
    # coupling distribution is the same in every frequency bin
    NN = grid.N.reshape(M, g.size)
    share = NN / NN.sum(axis=1, keepdims=True)
    assert np.allclose(share[NN.sum(axis=1) > 0], N / N.sum(), rtol=1e-9)
    assert np.all(np.abs(grid.delta) <= TWO_PI * 20e6 * (1 + 1e-12))


def test_bin_to_grid_matches_density_mass():
    line = _line()
    M = 101
    grid = bin_to_grid(line, M, (np.array([1.0]), np.array([1.0])), 1.0, omega_s=TWO_PI * 2.88e9,
                       span=TWO_PI * 20e6)
    p = grid.N / grid.N.sum()
    edges = TWO_PI * 2.88e9 + np.linspace(-TWO_PI * 10e6, TWO_PI * 10e6, M + 1)
    # analytic Lorentzian mass per bin, conditioned on the window
    cdf = np.arctan((edges - TWO_PI * 2.88e9) / (TWO_PI * 3e6))
    exact = np.diff(cdf) / (cdf[-1] - cdf[0])
    assert np.allclose(p, exact, rtol=2e-4)


def test_bin_to_grid_rejects():
    line = _line()
    one = (np.array([1.0]), np.array([1.0]))
    with pytest.raises(ValidationError):
        bin_to_grid(line, 0, one, 1.0)
    with pytest.raises(ValidationError):
        bin_to_grid(line, 10, (np.array([0.0]), np.array([1.0])), 1.0)
    with pytest.raises(ValidationError):
        bin_to_grid(line, 10, one, 1.0, omega_s=0.0, span=1.0)


def test_single_bin_grid():
    grid = bin_to_grid(_line(), 1, (np.array([2.0, 3.0]), np.array([1.0, 1.0])), 5.0)
    assert grid.size == 2 and np.all(grid.delta == 0)
    assert grid.g_ens == pytest.approx(5.0)


def test_frequency_density_dataclass():
    w = np.linspace(0, 1, 11)
    d = FrequencyDensity(w, np.ones(11), 0.0, "orth")
    assert d.integral() == pytest.approx(1.0)
    assert d.mean_frequency() == pytest.approx(0.5)
    assert d.step == pytest.approx(0.1)
    assert math.isclose(window_mass(d, 0.5, 0.4), 0.4, rel_tol=1e-12)
