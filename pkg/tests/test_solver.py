"""Weighted inner products, Crank-Nicolson evolution, and spectra."""
import numpy as np
import pytest

from cqmlab.errors import (DomainError, NormalizationError, StructureError)
from cqmlab.falg import coordinate_function, hamiltonian_function, momentum_function
from cqmlab.fields import field_array
from cqmlab.geometry import FibredChart, SpacelikeMetric, bundle_from_potential
from cqmlab.gridops import SpatialGrid
from cqmlab.quantum import WaveFunction, quantum_operator
from cqmlab.solver import (EvolutionConfig, bundle_is_static,
                           cluster_multiplicities, evolve, expectation,
                           inner_product, norm, normalize, spectrum)


def _grid(bundle):
    return SpatialGrid.from_chart(bundle.chart)


def _gauss(grid, center=0.0, width=1.0, k=0.0):
    x = grid.coords()[0]
    vals = np.exp(-(x - center) ** 2 / (2 * width ** 2)) * np.exp(1j * k * x)
    return WaveFunction(grid, 0.0, vals)


# -- inner products ------------------------------------------------------

def test_inner_product_flat(flat1d):
    grid = _grid(flat1d)
    psi = _gauss(grid)
    # int exp(-x^2) = sqrt(pi)
    assert inner_product(psi, psi, flat1d).real == pytest.approx(
        np.sqrt(np.pi), abs=1e-10)
    assert norm(normalize(psi, flat1d), flat1d) == pytest.approx(1.0)


def test_inner_product_curved_weight(sphere2d):
    """The round metric's area element integrates constants correctly."""
    grid = _grid(sphere2d)
    one = WaveFunction(grid, 0.0, np.ones(grid.size))
    val = inner_product(one, one, sphere2d).real
    # integral of 4/(1+r^2)^2 over the square (-0.9, 0.9)^2
    from scipy.integrate import dblquad
    exact, _ = dblquad(lambda y, x: 4 / (1 + x * x + y * y) ** 2,
                       -0.9, 0.9, -0.9, 0.9)
    # the interior-node quadrature misses an O(h) boundary strip
    assert val == pytest.approx(exact, rel=0.02)


def test_inner_product_grid_mismatch(flat1d):
    small = SpatialGrid.from_chart(FibredChart(1, [(-16.0, 16.0)], 64))
    with pytest.raises(StructureError):
        inner_product(_gauss(_grid(flat1d)), _gauss(small), flat1d)


def test_normalize_zero_state(flat1d):
    grid = _grid(flat1d)
    with pytest.raises(NormalizationError):
        normalize(WaveFunction(grid, 0.0, np.zeros(grid.size)), flat1d)


def test_expectation_requires_normalized(flat1d):
    grid = _grid(flat1d)
    op = quantum_operator(coordinate_function(flat1d, 1), flat1d, grid=grid)
    with pytest.raises(NormalizationError):
        expectation(op, _gauss(grid), flat1d)
    psi = normalize(_gauss(grid, center=1.5), flat1d)
    val, imag = expectation(op, psi, flat1d, return_imag=True)
    assert val == pytest.approx(1.5, abs=1e-10)
    assert abs(imag) <= 1e-12


def test_expectation_momentum_of_boosted_state(flat1d):
    grid = _grid(flat1d)
    psi = normalize(_gauss(grid, k=0.7), flat1d)
    op = quantum_operator(momentum_function(flat1d, 1), flat1d, grid=grid)
    assert expectation(op, psi, flat1d) == pytest.approx(0.7, abs=1e-3)


# -- evolution -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(DomainError):
        EvolutionConfig(0.0, 1.0, 0)
    with pytest.raises(DomainError):
        EvolutionConfig(1.0, 0.0, 10)
    with pytest.raises(DomainError):
        EvolutionConfig(0.0, 1.0, 10, scheme="euler")
    with pytest.raises(DomainError):
        EvolutionConfig(0.0, 1.0, 10, boundary="periodic")


def test_bundle_is_static(flat1d):
    assert bundle_is_static(flat1d)
    chart = FibredChart(1, [(-4.0, 4.0)], 64)
    moving = bundle_from_potential(
        chart, metric=SpacelikeMetric(field_array([["1 + t/2"]], 1)),
        potential=["0", "0"])
    assert not bundle_is_static(moving)


def test_evolve_conserves_norm(harmonic1d):
    grid = _grid(harmonic1d)
    psi0 = normalize(_gauss(grid, center=1.0), harmonic1d)
    result = evolve(psi0, harmonic1d, 0.0, EvolutionConfig(0.0, 1.0, 200))
    assert np.max(np.abs(result.norms - 1.0)) <= 1e-12


def test_evolve_stationary_phase(harmonic1d):
    """The ground state acquires exactly the phase e^{-i t/2} (up to O(dt^2))."""
    grid = _grid(harmonic1d)
    psi0 = normalize(_gauss(grid), harmonic1d)
    result = evolve(psi0, harmonic1d, 0.0, EvolutionConfig(0.0, 1.0, 400))
    target = WaveFunction(grid, 1.0, psi0.values * np.exp(-0.5j))
    overlap = inner_product(result.final, target, harmonic1d)
    assert abs(overlap) == pytest.approx(1.0, abs=1e-8)
    assert abs(overlap - 1.0) <= 1e-4


def test_evolve_second_order_in_dt(harmonic1d):
    grid = _grid(harmonic1d)
    psi0 = normalize(_gauss(grid, center=0.5), harmonic1d)
    exact = evolve(psi0, harmonic1d, 0.0, EvolutionConfig(0.0, 0.5, 800)).final
    errs = []
    for steps in (25, 50):
        res = evolve(psi0, harmonic1d, 0.0, EvolutionConfig(0.0, 0.5, steps))
        errs.append(np.max(np.abs(res.final.values - exact.values)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_evolve_observable_series(harmonic1d):
    """<x>(t) swings like cos t for a displaced coherent state."""
    grid = _grid(harmonic1d)
    psi0 = normalize(_gauss(grid, center=1.0), harmonic1d)
    obs = {"x": quantum_operator(coordinate_function(harmonic1d, 1),
                                 harmonic1d, grid=grid)}
    result = evolve(psi0, harmonic1d, 0.0,
                    EvolutionConfig(0.0, np.pi, 600), observables=obs)
    assert result.series["x"][0] == pytest.approx(1.0, abs=1e-8)
    assert result.series["x"][-1] == pytest.approx(-1.0, abs=1e-3)


# -- spectra -------------------------------------------------------------

def test_spectrum_harmonic(harmonic1d):
    res = spectrum(harmonic1d, n_modes=5)
    exact = np.arange(5) + 0.5
    assert np.max(np.abs(res.eigenvalues - exact) / exact) <= 1e-3
    assert np.all(res.residuals <= 1e-3)
    for st in res.eigenstates:
        assert norm(st, harmonic1d) == pytest.approx(1.0)


def test_spectrum_requires_static():
    chart = FibredChart(1, [(-4.0, 4.0)], 64)
    moving = bundle_from_potential(
        chart, metric=SpacelikeMetric(field_array([["1 + t/2"]], 1)),
        potential=["0", "0"])
    with pytest.raises(DomainError):
        spectrum(moving)


def test_spectrum_custom_function(flat1d):
    """The default spectrum target equals H0 built explicitly."""
    f = hamiltonian_function(flat1d)
    res = spectrum(flat1d, f=f, n_modes=3)
    box = spectrum(flat1d, n_modes=3)
    assert np.allclose(res.eigenvalues, box.eigenvalues, atol=1e-12)


def test_cluster_multiplicities():
    assert cluster_multiplicities([1.0, 1.0 + 1e-8, 2.0, 3.0, 3.0], 1e-6) \
        == [2, 1, 2]
    assert cluster_multiplicities([], 1e-6) == []
