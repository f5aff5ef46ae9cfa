"""Acceptance suite.

Each test covers one release criterion, prints a single summary line with
the measured residual, its tolerance, and the runtime budget, and fails
if either bound is exceeded.
"""
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import random_bundle, random_quantisable
from cqmlab.falg import (classify, coordinate_function, hamiltonian_function,
                         momentum_function, special_bracket, tangent_lift)
from cqmlab.fields import field_array
from cqmlab.geometry import (FibredChart, SpacelikeMetric, SpacetimeConnection,
                             bundle_from_potential, make_bundle,
                             validate_geometry)
from cqmlab.gridops import SpatialGrid, central_diff, diag, flux_second_diff
from cqmlab.phase import PhasePoint, build_gamma, build_omega, integrate_newton
from cqmlab.quantum import (AnalyticState, WaveFunction, commutator_check,
                            quantum_operator)
from cqmlab.solver import (EvolutionConfig, cluster_multiplicities, evolve,
                           expectation, inner_product, normalize, spectrum,
                           weight_vector)


def _report(cid, desc, value, tol, elapsed, limit):
    ok = value <= tol and elapsed <= limit
    print(f"[{cid}] {desc}: residual {value:.3e} (tol {tol:.0e}), "
          f"{elapsed:.2f}s (limit {limit:.0f}s) -> "
          f"{'PASS' if ok else 'FAIL'}")
    assert value <= tol, f"{cid}: residual {value:.3e} exceeds {tol:.0e}"
    assert elapsed <= limit, f"{cid}: runtime {elapsed:.2f}s exceeds {limit}s"


def test_c1_flat_reduction(flat1d):
    """x-hat, P-hat, H0-hat coincide with the standard grid operators."""
    start = time.perf_counter()
    grid = SpatialGrid.from_chart(flat1d.chart)
    x = grid.coords()[0]
    h = grid.steps[0]
    ones = np.ones(grid.size)
    standard = {
        "x": diag(x).astype(complex),
        "P": -1j * central_diff(grid, 0),
        "H0": -0.5 * flux_second_diff(grid, 0, ones, ones).astype(complex),
    }
    ops = {
        "x": quantum_operator(coordinate_function(flat1d, 1), flat1d, grid=grid),
        "P": quantum_operator(momentum_function(flat1d, 1), flat1d, grid=grid),
        "H0": quantum_operator(hamiltonian_function(flat1d), flat1d, grid=grid),
    }
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        psi = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
        psi /= np.max(np.abs(psi))
        for name in standard:
            d = ops[name].matrix @ psi - standard[name] @ psi
            worst = max(worst, float(np.max(np.abs(d))))
    _report("C1", "flat reduction, 20 random states", worst, 1e-10,
            time.perf_counter() - start, 1.0)


def test_c2_structural_equivalence(rng):
    """Admissible bundles validate and have closed Omega; a defect fails."""
    start = time.perf_counter()
    worst_validate, worst_closure = 0.0, 0.0
    for i in range(20):
        n = 2 if i % 4 == 0 else 1
        bundle = random_bundle(rng, n=n, time_dependent=(i % 5 == 0))
        report = validate_geometry(bundle)
        worst_validate = max(worst_validate, report.max_residual)
        omega = build_omega(bundle)
        pts = [PhasePoint(0.1, [0.2] * n, [0.3] * n),
               PhasePoint(0.4, [-0.3] * n, [0.1] * n)]
        worst_closure = max(worst_closure, omega.closure_residual(pts))
    # injected defect: an asymmetric connection must fail both checks
    bad = SpacetimeConnection.zero(2)
    bad.coeffs[1, 0, 2] = field_array(["x1"], 2, shape=(1,))[0]
    chart = FibredChart(2, [(-1, 1), (-1, 1)], (16, 16))
    broken = make_bundle(chart, metric=SpacelikeMetric.flat(2), grav=bad)
    assert validate_geometry(broken).max_residual > 1e-3
    elapsed = time.perf_counter() - start
    _report("C2", "20 random bundles validate", worst_validate, 1e-8,
            elapsed, 30.0)
    assert worst_closure <= 1e-6, f"closure residual {worst_closure:.3e}"


def test_c3_lie_algebra_suite(rng):
    """Antisymmetry, Jacobi, and the tangent-lift morphism property."""
    start = time.perf_counter()
    worst = 0.0

    # antisymmetry over 50 pairs at 100 random phase points each
    for i in range(50):
        n = 2 if i % 5 == 0 else 1
        bundle = random_bundle(rng, n=n)
        f, g = random_quantisable(rng, n), random_quantisable(rng, n)
        fg = special_bracket(f, g, bundle)
        gf = special_bracket(g, f, bundle)
        npts = 100 if n == 1 else 20
        for _ in range(npts):
            p = PhasePoint(rng.uniform(-0.5, 0.5),
                           rng.uniform(-0.7, 0.7, n), rng.uniform(-1, 1, n))
            worst = max(worst, abs(fg.value(bundle, p) + gf.value(bundle, p)))

    # Jacobi over 50 random triples
    for _ in range(50):
        bundle = random_bundle(rng, n=1)
        f, g, h = (random_quantisable(rng, 1) for _ in range(3))
        j1 = special_bracket(special_bracket(f, g, bundle), h, bundle)
        j2 = special_bracket(special_bracket(g, h, bundle), f, bundle)
        j3 = special_bracket(special_bracket(h, f, bundle), g, bundle)
        for _ in range(2):
            p = PhasePoint(rng.uniform(-0.3, 0.3),
                           rng.uniform(-0.5, 0.5, 1), rng.uniform(-1, 1, 1))
            worst = max(worst, abs(sum(j.value(bundle, p)
                                       for j in (j1, j2, j3))))

    # morphism: X[[[f,g]]] = [X[f], X[g]] via finite differences
    fd = 1e-5
    for _ in range(50):
        bundle = random_bundle(rng, n=1)
        f, g = random_quantisable(rng, 1), random_quantisable(rng, 1)
        Xf, Xg = tangent_lift(f, bundle), tangent_lift(g, bundle)
        Xb = tangent_lift(special_bracket(f, g, bundle), bundle)
        for _ in range(2):
            t, x = rng.uniform(-0.3, 0.3), [rng.uniform(-0.5, 0.5)]
            comm = np.zeros(2)
            for lam in range(2):
                tp, xp = (t + fd, x) if lam == 0 else (t, [x[0] + fd])
                tm, xm = (t - fd, x) if lam == 0 else (t, [x[0] - fd])
                dg = (np.asarray(Xg(tp, xp)) - np.asarray(Xg(tm, xm))) / (2 * fd)
                df = (np.asarray(Xf(tp, xp)) - np.asarray(Xf(tm, xm))) / (2 * fd)
                comm += Xf(t, x)[lam] * dg - Xg(t, x)[lam] * df
            worst = max(worst, float(np.max(np.abs(
                np.asarray(Xb(t, x)) - comm))))

    _report("C3", "Lie suite (50 pairs/triples)", worst, 1e-6,
            time.perf_counter() - start, 60.0)


def test_c4_commutator_and_obstruction():
    """[x-hat, P-hat] psi = psi, and the full obstruction identity."""
    start = time.perf_counter()
    chart = FibredChart(1, [(-12.0, 12.0)], 262144)
    flat = bundle_from_potential(chart, potential=["0", "0"])
    grid = SpatialGrid.from_chart(chart)
    state = AnalyticState(grid, lambda t, xs: np.exp(-xs[0] ** 2 / 8)
                          * np.exp(0.5j * xs[0]))
    rep = commutator_check(coordinate_function(flat, 1),
                           momentum_function(flat, 1), state, flat)
    canonical = rep.residual

    chart2 = FibredChart(1, [(-10.0, 10.0)], 32768)
    harm = bundle_from_potential(chart2, potential=["-x1^2/2", "0"])
    grid2 = SpatialGrid.from_chart(chart2)
    stationary = AnalyticState(grid2, lambda t, xs: np.exp(-xs[0] ** 2 / 2)
                               * np.exp(-0.5j * t))
    rep2 = commutator_check(hamiltonian_function(harm),
                            momentum_function(harm, 1), stationary, harm)
    assert rep2.obstruction_active and rep2.obstruction_norm > 0.1
    elapsed = time.perf_counter() - start
    _report("C4", "canonical commutator [x,P] = 1", canonical, 1e-8,
            elapsed, 10.0)
    _report("C4", "obstruction identity (H0, P1)", rep2.residual, 1e-6,
            0.0, 10.0)


def test_c5_hermiticity(rng, flat1d, sphere2d):
    """Operator battery is Hermitian in the weighted inner product."""
    start = time.perf_counter()
    worst = 0.0
    for bundle in (flat1d, sphere2d):
        grid = SpatialGrid.from_chart(bundle.chart)
        battery = [hamiltonian_function(bundle),
                   coordinate_function(bundle, 1),
                   momentum_function(bundle, 1)]
        battery += [random_quantisable(rng, bundle.n, allow_time=False)
                    for _ in range(5)]
        for f in battery:
            op = quantum_operator(f, bundle, k_factor=1.0, grid=grid)
            worst = max(worst, op.hermiticity_defect())
    _report("C5", "Hermiticity battery (flat + sphere)", worst, 1e-8,
            time.perf_counter() - start, 60.0)


def test_c6_spectra(flat1d, harmonic1d):
    """Box and oscillator eigenvalues; 2D oscillator degeneracies."""
    start = time.perf_counter()
    ns = np.arange(1, 6)

    box = spectrum(flat1d, n_modes=5)
    exact_box = (ns * np.pi / 32.0) ** 2 / 2.0
    worst = float(np.max(np.abs(box.eigenvalues - exact_box) / exact_box))

    osc = spectrum(harmonic1d, n_modes=5)
    exact_osc = ns - 0.5
    worst = max(worst, float(np.max(np.abs(osc.eigenvalues - exact_osc)
                                    / exact_osc)))

    chart2 = FibredChart(2, [(-8.0, 8.0), (-8.0, 8.0)], (96, 96))
    iso = bundle_from_potential(chart2,
                                potential=["-(x1^2 + x2^2)/2", "0", "0"])
    res2 = spectrum(iso, n_modes=6)
    mult = cluster_multiplicities(res2.eigenvalues, 0.05)
    assert mult == [1, 2, 3], f"2D oscillator multiplicities {mult}"
    _report("C6", "spectra (box, oscillator, 2D degeneracy)", worst, 1e-3,
            time.perf_counter() - start, 120.0)


def test_c7_unitary_evolution(flat1d, harmonic1d):
    """Norm conservation, free-packet dispersion, and Ehrenfest."""
    start = time.perf_counter()
    gridh = SpatialGrid.from_chart(harmonic1d.chart)
    xh = gridh.coords()[0]

    # norm drift over 1000 Crank-Nicolson steps
    psi0 = normalize(WaveFunction(gridh, 0.0, np.exp(-(xh - 1) ** 2 / 2)),
                     harmonic1d)
    res = evolve(psi0, harmonic1d, 0.0, EvolutionConfig(0.0, 2.0, 1000))
    drift = float(np.max(np.abs(res.norms - 1.0)))

    # free Gaussian dispersion sigma^2(t) = sigma0^2 + t^2 / (4 sigma0^2)
    gridf = SpatialGrid.from_chart(flat1d.chart)
    xf = gridf.coords()[0]
    w = weight_vector(flat1d, gridf, 0.0)
    free0 = normalize(WaveFunction(gridf, 0.0, np.exp(-xf ** 2 / 2)), flat1d)
    resf = evolve(free0, flat1d, 0.0, EvolutionConfig(0.0, 1.0, 500))
    rho = np.abs(resf.final.values) ** 2 * w
    sigma2 = float(np.sum(rho * xf ** 2) - np.sum(rho * xf) ** 2)
    disp_err = abs(sigma2 - 1.0)     # sigma0^2 = 1/2 -> sigma^2(1) = 1

    # Ehrenfest: <x>(t) tracks the classical oscillation cos t
    obs = {"x": quantum_operator(coordinate_function(harmonic1d, 1),
                                 harmonic1d, grid=gridh)}
    rese = evolve(psi0, harmonic1d, 0.0, EvolutionConfig(0.0, np.pi, 600),
                  observables=obs)
    ehrenfest = float(np.max(np.abs(rese.series["x"] - np.cos(rese.times))))

    elapsed = time.perf_counter() - start
    _report("C7", "CN norm drift over 1000 steps", drift, 1e-10, elapsed, 120.0)
    _report("C7", "free-Gaussian dispersion at t=1", disp_err, 1e-3, 0.0, 120.0)
    _report("C7", "Ehrenfest <x>(t) vs cos t", ehrenfest, 1e-3, 0.0, 120.0)


def test_c8_curvature_toggle(sphere2d):
    """k: 0 -> 1 shifts <H0-hat> by exactly (1/2) <r0> (= 1 on the sphere)."""
    start = time.perf_counter()
    grid = SpatialGrid.from_chart(sphere2d.chart)
    x1, x2 = grid.coords()
    psi = normalize(WaveFunction(grid, 0.0,
                                 np.exp(-(x1 ** 2 + x2 ** 2) / 0.08)), sphere2d)
    h0 = hamiltonian_function(sphere2d)
    e0 = expectation(quantum_operator(h0, sphere2d, 0.0, grid), psi, sphere2d)
    e1 = expectation(quantum_operator(h0, sphere2d, 1.0, grid), psi, sphere2d)
    # r0 = 2 on the unit sphere, so the shift is exactly 1
    shift_err = abs((e1 - e0) - 1.0)
    _report("C8", "curvature toggle shift = (1/2)<r0>", shift_err, 1e-6,
            time.perf_counter() - start, 30.0)


def test_c9_classical_dynamics(sphere2d):
    """Closed-form trajectories and a geodesic against a Christoffel oracle."""
    start = time.perf_counter()
    worst = 0.0

    # uniform acceleration: A_0 = E x -> x(t) = E t^2 / 2
    chart = FibredChart(1, [(-8.0, 8.0)], 64)
    em = bundle_from_potential(chart, potential=["1.5*x1", "0"])
    traj = integrate_newton(build_gamma(em), PhasePoint(0.0, [0.0], [0.0]),
                            2.0, 10000)
    worst = max(worst, abs(traj[-1].x[0] - 3.0), abs(traj[-1].v[0] - 3.0))

    # oscillator: x(0) = 1, v(0) = 0 returns to x = 1 at t = 2 pi
    chart2 = FibredChart(1, [(-4.0, 4.0)], 64)
    harm = bundle_from_potential(chart2, potential=["-x1^2/2", "0"])
    traj2 = integrate_newton(build_gamma(harm), PhasePoint(0.0, [1.0], [0.0]),
                             2 * np.pi, 10000)
    worst = max(worst, abs(traj2[-1].x[0] - 1.0), abs(traj2[-1].v[0]))

    # sphere geodesic vs an independent Christoffel-symbol integration
    p0 = PhasePoint(0.0, [0.1, -0.2], [0.15, 0.1])
    # 2000 RK4 steps keep the integrator error ~1e-13, well inside budget
    traj3 = integrate_newton(build_gamma(sphere2d), p0, 1.0, 2000)
    G = sphere2d.metric.components
    dG = [[[G[i, j].diff(k + 1) for k in range(2)] for j in range(2)]
          for i in range(2)]

    def rhs(t, y):
        x, v = y[:2], y[2:]
        Gv = np.array([[G[i, j](t, x) for j in range(2)] for i in range(2)])
        dGv = np.array([[[dG[i][j][k](t, x) for k in range(2)]
                         for j in range(2)] for i in range(2)])
        Ginv = np.linalg.inv(Gv)
        acc = np.zeros(2)
        for h in range(2):
            for i in range(2):
                for j in range(2):
                    Gam = 0.5 * sum(
                        Ginv[h, k] * (dGv[k][j][i] + dGv[k][i][j]
                                      - dGv[i][j][k])
                        for k in range(2))
                    acc[h] -= Gam * v[i] * v[j]
        return np.concatenate([v, acc])

    sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([p0.x, p0.v]),
                    rtol=1e-12, atol=1e-13, dense_output=False)
    worst = max(worst, float(np.max(np.abs(
        np.concatenate([traj3[-1].x, traj3[-1].v]) - sol.y[:, -1]))))

    _report("C9", "classical trajectories + geodesic", worst, 1e-6,
            time.perf_counter() - start, 10.0)
