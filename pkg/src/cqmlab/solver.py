"""Unitary time evolution, weighted inner products, and spectra.

Evolution integrates the quantum dynamical equation S.psi = 0 with
Crank-Nicolson steps; for time-independent metrics the discrete
Hamiltonian is exactly Hermitian in the weighted inner product, so the
norm is conserved to round-off.  Spectra come from a shift-invert
Lanczos iteration on the |g|^(1/4)-symmetrized operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .errors import (ConvergenceError, DomainError, NormalizationError,
                     NumericalError, StructureError)
from .falg import SpecialQuadratic, classify, hamiltonian_function
from .fields import all_symbolic
from .geometry import GeometryBundle
from .gridops import SpatialGrid, diag
from .quantum import (QuantumOperator, WaveFunction, _density_rate, _weight,
                      hamiltonian_matrix, quantum_operator)


# -- inner products ------------------------------------------------------

def weight_vector(bundle: GeometryBundle, grid: SpatialGrid, t):
    """Quadrature weights sqrt|g| * cell volume on the nodes."""
    return _weight(bundle, grid, t) * grid.cell_volume()


def inner_product(psi1: WaveFunction, psi2: WaveFunction,
                  bundle: GeometryBundle) -> complex:
    if psi1.grid.shape != psi2.grid.shape or psi1.t != psi2.t:
        raise StructureError("inner product needs matching grids and times")
    w = weight_vector(bundle, psi1.grid, psi1.t)
    return complex(np.sum(np.conj(psi1.values) * psi2.values * w))


def norm(psi: WaveFunction, bundle) -> float:
    return float(np.sqrt(inner_product(psi, psi, bundle).real))


def normalize(psi: WaveFunction, bundle) -> WaveFunction:
    nrm = norm(psi, bundle)
    if nrm == 0.0:
        raise NormalizationError("cannot normalize the zero state")
    return psi.with_values(psi.values / nrm)


def expectation(op: QuantumOperator, psi: WaveFunction, bundle,
                return_imag=False):
    """Re <psi, op psi> for a normalized psi; the imaginary part is the
    Hermiticity diagnostic."""
    nrm = norm(psi, bundle)
    if abs(nrm - 1.0) > 1e-6:
        raise NormalizationError(f"state norm {nrm} is not 1")
    val = inner_product(psi, op.apply(psi), bundle)
    return (val.real, val.imag) if return_imag else val.real


# -- evolution -----------------------------------------------------------

@dataclass(frozen=True)
class EvolutionConfig:
    t_start: float
    t_end: float
    steps: int
    scheme: str = "crank-nicolson"
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if not self.t_end > self.t_start:
            raise DomainError("t_end must exceed t_start")
        if self.scheme != "crank-nicolson":
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.boundary != "dirichlet":
            raise DomainError(f"unknown boundary {self.boundary!r}")


@dataclass
class EvolutionResult:
    final: WaveFunction
    times: np.ndarray
    norms: np.ndarray
    series: dict = field(default_factory=dict)


def bundle_is_static(bundle: GeometryBundle) -> bool:
    """True when metric and potential are symbolic and time-independent."""
    fields = list(bundle.metric.components.ravel()) + list(bundle.potential)
    if not all_symbolic(fields):
        return False
    return all(f.diff(0).is_zero() for f in fields)


def _effective_hamiltonian(bundle, grid, t, k_factor):
    """H plus the anti-Hermitian density-rate term for moving metrics:
    i d_0 psi = (H - (i/2) d_0 sqrt|g|/sqrt|g|) psi."""
    H = hamiltonian_matrix(bundle, grid, t, k_factor)
    rate = _density_rate(bundle, grid, t)
    if np.any(rate != 0.0):
        H = H - 1j * diag(rate)
    return H.tocsr()


def evolve(psi0: WaveFunction, bundle: GeometryBundle, k_factor,
           config: EvolutionConfig, observables=None) -> EvolutionResult:
    """Crank-Nicolson evolution of S.psi = 0.

    ``observables`` maps names to QuantumOperators sampled at every step
    (on the normalized state) into the result's series dict.
    """
    grid = psi0.grid
    dt = (config.t_end - config.t_start) / config.steps
    static = bundle_is_static(bundle)
    w = weight_vector(bundle, grid, config.t_start)
    psi = psi0.values.copy()
    times = np.empty(config.steps + 1)
    norms = np.empty(config.steps + 1)
    series = {name: np.empty(config.steps + 1) for name in (observables or {})}

    lu = None
    stepper = None

    def factor(t_mid):
        H = _effective_hamiltonian(bundle, grid, t_mid, k_factor)
        A = (sparse.identity(grid.size, format="csc", dtype=complex)
             + 0.5j * dt * H).tocsc()
        B = (sparse.identity(grid.size, format="csr", dtype=complex)
             - 0.5j * dt * H)
        return spla.splu(A), B

    def record(i, t, v):
        times[i] = t
        norms[i] = float(np.sqrt(np.sum(np.abs(v) ** 2 * w).real))
        for name, op in (observables or {}).items():
            series[name][i] = float(
                np.real(np.conj(v) @ (w * (op.matrix @ v)))) / max(norms[i] ** 2, 1e-300)

    record(0, config.t_start, psi)
    t = config.t_start
    for step in range(config.steps):
        t_mid = t + 0.5 * dt
        if lu is None or not static:
            lu, stepper = factor(t_mid)
        try:
            psi = lu.solve(stepper @ psi)
        except RuntimeError as exc:
            raise NumericalError(f"linear solve failed at step {step}: {exc}")
        if not np.all(np.isfinite(psi.view(float))):
            raise NumericalError(f"non-finite state at step {step}")
        t += dt
        record(step + 1, t, psi)
    return EvolutionResult(WaveFunction(grid, config.t_end, psi),
                           times, norms, series)


# -- spectra -------------------------------------------------------------

@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenstates: list
    residuals: np.ndarray


def spectrum(bundle: GeometryBundle, k_factor=0.0, n_modes=5,
             f: SpecialQuadratic = None, grid: SpatialGrid = None,
             t=0.0) -> SpectrumResult:
    """Lowest eigenpairs of f-hat (default H0-hat) on a static scenario.

    The weighted eigenproblem is symmetrized by the similarity transform
    W^(1/2) M W^(-1/2) (W the quadrature weight), then solved by ARPACK
    shift-invert below the smallest diagonal entry.
    """
    if not bundle_is_static(bundle):
        raise DomainError("spectrum needs a time-independent scenario")
    f = f if f is not None else hamiltonian_function(bundle)
    if not classify(f, bundle.chart).constant_time:
        raise DomainError("spectrum needs f with constant f0")
    grid = grid if grid is not None else SpatialGrid.from_chart(bundle.chart)
    op = quantum_operator(f, bundle, k_factor, grid, t)
    w = weight_vector(bundle, grid, t)
    sw = np.sqrt(w)
    A = diag(sw) @ op.matrix @ diag(1.0 / sw)
    A = (0.5 * (A + A.conjugate().transpose())).tocsc()
    # Gershgorin lower bound puts the shift below the whole spectrum
    row_abs = np.abs(A).sum(axis=1).A1 if hasattr(np.abs(A).sum(axis=1), "A1") \
        else np.asarray(np.abs(A).sum(axis=1)).ravel()
    lower = float(np.min(A.diagonal().real - (row_abs - np.abs(A.diagonal()))))
    sigma = lower - 1.0
    try:
        vals, vecs = spla.eigsh(A, k=n_modes, sigma=sigma, which="LM")
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"eigensolver stalled with {len(exc.eigenvalues)} converged modes",
            attained=exc.eigenvalues)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    states, residuals = [], []
    for m in range(n_modes):
        phi = vecs[:, m] / sw
        st = normalize(WaveFunction(grid, t, phi), bundle)
        r = op.matrix @ st.values - vals[m] * st.values
        residuals.append(float(np.sqrt(np.sum(np.abs(r) ** 2 * w).real)))
        states.append(st)
    return SpectrumResult(vals.real, states, np.array(residuals))


def cluster_multiplicities(eigenvalues, tol):
    """Group an ascending eigenvalue list into degenerate clusters."""
    groups = []
    for lam in np.asarray(eigenvalues, dtype=float):
        if groups and lam - groups[-1][-1] <= tol:
            groups[-1].append(lam)
        else:
            groups.append([lam])
    return [len(g) for g in groups]
