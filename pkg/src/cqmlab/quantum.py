"""Covariant quantum operators on grid wavefunctions.

Discretization notes
--------------------
All operators act on the interior-node grid with homogeneous Dirichlet
boundaries.  Second-order terms use conservative (staggered-flux)
stencils and first-order terms are symmetrized against the density
sqrt|g|, so every quantum operator is Hermitian with respect to the
weighted inner product *exactly* at the matrix level, not only in the
continuum limit.

Convention: the vertical component of the quantum vector field is
Y_z = -i (f0 A_0 - f^h A_h + f_base) + (1/2) Div X[f], fixed by the
displayed special cases Z[H0], Z[P_j] and by the requirement that
f_hat = Z[f] - i f0 S holds as an operator identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from . import gridops
from .errors import (ClassificationError, DomainError, StencilError,
                     StructureError, TestStateError)
from .falg import SpecialQuadratic, classify, tangent_lift
from .fields import ScalarField, eval_field_array
from .geometry import GeometryBundle, scalar_curvature
from .gridops import SpatialGrid, central_diff, diag, identity

_TIME_STEP = 1e-3
_COARSE_AXIS = 48


# -- states --------------------------------------------------------------

@dataclass
class WaveFunction:
    """A complex wavefunction slice psi(t, .) on the spatial grid."""

    grid: SpatialGrid
    t: float
    values: np.ndarray      # flat complex array, grid.size entries

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).ravel()
        if self.values.size != self.grid.size:
            raise StructureError(
                f"values size {self.values.size} != grid size {self.grid.size}")
        if not np.all(np.isfinite(self.values.view(float))):
            raise DomainError("wavefunction contains non-finite values")

    @classmethod
    def from_callable(cls, grid, t, func):
        xs = grid.coords()
        return cls(grid, t, np.asarray(func(t, xs), dtype=complex).ravel())

    @property
    def values_nd(self):
        return self.values.reshape(self.grid.shape)

    def with_values(self, values):
        return WaveFunction(self.grid, self.t, values)


class TimeState:
    """A grid wavefunction known as a function of time (for time stencils)."""

    def __init__(self, grid: SpatialGrid, at):
        self.grid = grid
        self._at = at

    def at(self, t):
        return np.asarray(self._at(t), dtype=complex).ravel()

    def ddt(self, t, step=_TIME_STEP):
        """Fourth-order central time derivative."""
        return (-self.at(t + 2 * step) + 8 * self.at(t + step)
                - 8 * self.at(t - step) + self.at(t - 2 * step)) / (12 * step)

    def slice(self, t) -> WaveFunction:
        return WaveFunction(self.grid, t, self.at(t))


class AnalyticState(TimeState):
    """Time state backed by a closed-form callable psi(t, xs) -> complex."""

    def __init__(self, grid: SpatialGrid, func):
        xs = grid.coords()
        super().__init__(grid, lambda t: func(t, xs))
        self.func = func


# -- field evaluation on grids -------------------------------------------

def eval_on_grid(f: ScalarField, grid: SpatialGrid, t,
                 max_direct=4096):
    """Evaluate a scalar field on all grid nodes.

    Callable-backed fields (e.g. bracket coefficients, which cost a
    linear solve per point) are sampled on a coarse per-axis grid and
    cubically interpolated when the grid is large; symbolic fields are
    always evaluated directly.
    """
    if f.symbolic or grid.size <= max_direct:
        return grid.eval_field(f, t)
    from scipy.interpolate import RegularGridInterpolator
    coarse = [np.linspace(a[0], a[-1], min(len(a), _COARSE_AXIS))
              for a in grid.axes]
    meshes = np.meshgrid(*coarse, indexing="ij")
    vals = f(t, [m.ravel() for m in meshes]).reshape(meshes[0].shape)
    interp = RegularGridInterpolator(coarse, vals, method="cubic")
    pts = np.stack(grid.coords(), axis=-1)
    return interp(pts)


def _weight(bundle: GeometryBundle, grid: SpatialGrid, t,
            offset_axis=None, offset=0.0):
    """sqrt|g| on the nodes (or on staggered midpoints)."""
    return grid.eval_field(bundle.metric.sqrt_det_field(), t,
                           offset_axis, offset)


def _potential_values(bundle, grid, t):
    """A_lambda on the nodes: array (n+1, size)."""
    return np.stack([grid.eval_field(a, t) for a in bundle.potential])


def _inverse_metric_values(bundle, grid, t, offset_axis=None, offset=0.0):
    Ginv = bundle.metric.inverse_fields()
    n = bundle.n
    return np.stack([[grid.eval_field(Ginv[i, j], t, offset_axis, offset)
                      for j in range(n)] for i in range(n)])


def curvature_values(bundle, grid, t):
    r0 = scalar_curvature(bundle.metric, t)
    return np.asarray(r0(grid.coords()), dtype=float)


# -- matrix assembly -----------------------------------------------------

def covariant_derivative_matrix(bundle, grid, t, j):
    """nabla_j = d_j - i A_j as a sparse matrix (spatial j, 1-based)."""
    if not 1 <= j <= bundle.n:
        raise DomainError(f"spatial index {j} out of range 1..{bundle.n}")
    A = grid.eval_field(bundle.potential[j], t)
    return (central_diff(grid, j - 1) - 1j * diag(A)).tocsr()


def sym_advection_matrix(grid, w, coeffs):
    """-(i/2) sum_j (c^j d_j + (1/sqrt|g|) d_j (sqrt|g| c^j .)).

    The symmetrized discretization of -i c^j d_j - (i/2) div(c)/sqrt|g|;
    exactly anti-Hermitian times i with respect to the weight w.
    """
    out = None
    for j, c in enumerate(coeffs):
        D = central_diff(grid, j)
        term = diag(np.asarray(c)) @ D + diag(1.0 / w) @ (D @ diag(w * np.asarray(c)))
        out = term if out is None else out + term
    return (-0.5j * out).tocsr() if out is not None else None


def laplacian_matrix(bundle, grid, t):
    """The covariant Laplacian of the quantum connection,
    (1/sqrt|g|) nabla_h (sqrt|g| G^{hk} nabla_k .), as a sparse matrix."""
    n = bundle.n
    w = _weight(bundle, grid, t)
    inv_w = diag(1.0 / w)
    L = sparse.csr_matrix((grid.size, grid.size), dtype=float)
    # diagonal flux terms with staggered midpoint coefficients
    for j in range(n):
        h = grid.steps[j]
        Ginv = bundle.metric.inverse_fields()
        cplus = (_weight(bundle, grid, t, j, +0.5 * h)
                 * grid.eval_field(Ginv[j, j], t, j, +0.5 * h))
        cminus = (_weight(bundle, grid, t, j, -0.5 * h)
                  * grid.eval_field(Ginv[j, j], t, j, -0.5 * h))
        L = L + inv_w @ gridops.flux_second_diff(grid, j, cminus, cplus)
    # symmetrized cross terms
    Ginv_v = _inverse_metric_values(bundle, grid, t)
    for j in range(n):
        for k in range(j + 1, n):
            c = diag(w * Ginv_v[j, k])
            Dj, Dk = central_diff(grid, j), central_diff(grid, k)
            L = L + inv_w @ (Dj @ c @ Dk + Dk @ c @ Dj)
    # gauge coupling
    A = _potential_values(bundle, grid, t)
    M = L.astype(complex)
    if np.any(A[1:] != 0.0):
        a = np.einsum("ijp,jp->ip", Ginv_v, A[1:])
        M = M + 2.0 * sym_advection_matrix(grid, w, list(a))
        M = M - diag(np.einsum("ip,ip->p", a, A[1:]))
    return M.tocsr()


def hamiltonian_matrix(bundle, grid, t, k_factor=0.0):
    """H = -1/2 Laplacian + 1/2 k r0 - A_0 (the matrix of H0-hat)."""
    A0 = grid.eval_field(bundle.potential[0], t)
    H = -0.5 * laplacian_matrix(bundle, grid, t) - diag(A0).astype(complex)
    if k_factor != 0.0:
        H = H + 0.5 * k_factor * diag(curvature_values(bundle, grid, t))
    return H.tocsr()


# -- pointwise quantum-layer operations ----------------------------------

def covariant_derivative(psi, bundle, lam):
    """nabla_lam psi: spatial lam on a WaveFunction; lam = 0 needs a
    TimeState (analytic or two-slice time dependence)."""
    if lam == 0:
        if not isinstance(psi, TimeState):
            raise StencilError(
                "time covariant derivative needs a TimeState (no time stencil "
                "is available on a single slice)")
        raise DomainError("pass (state, t): use covariant_time_derivative")
    grid, t = psi.grid, psi.t
    M = covariant_derivative_matrix(bundle, grid, t, lam)
    return psi.with_values(M @ psi.values)


def covariant_time_derivative(state: TimeState, bundle, t):
    if not isinstance(state, TimeState):
        raise StencilError("time covariant derivative needs a TimeState")
    A0 = state.grid.eval_field(bundle.potential[0], t)
    return WaveFunction(state.grid, t, state.ddt(t) - 1j * A0 * state.at(t))


def curved_laplacian(psi: WaveFunction, bundle) -> WaveFunction:
    M = laplacian_matrix(bundle, psi.grid, psi.t)
    return psi.with_values(M @ psi.values)


def _density_rate(bundle, grid, t):
    """(1/2) d_0 sqrt|g| / sqrt|g| on the nodes (zero for static metrics)."""
    sg = bundle.metric.sqrt_det_field()
    if sg.symbolic and sg.diff(0).is_zero():
        return np.zeros(grid.size)
    return 0.5 * grid.eval_field(sg.diff(0), t) / grid.eval_field(sg, t)


def schrodinger_spatial_matrix(bundle, grid, t, k_factor=0.0):
    """The non-time-derivative part of S:
    S.psi = d_0 psi + M psi with M = -i A_0 + (1/2) d_0 sqrt|g|/sqrt|g|
    - (i/2)(Laplacian - k r0)."""
    A0 = grid.eval_field(bundle.potential[0], t)
    M = (-1j * diag(A0) + diag(_density_rate(bundle, grid, t))
         - 0.5j * laplacian_matrix(bundle, grid, t))
    if k_factor != 0.0:
        M = M + 0.5j * k_factor * diag(curvature_values(bundle, grid, t))
    return M.tocsr()


def schrodinger_apply(state: TimeState, bundle, k_factor, t) -> WaveFunction:
    """The quantum dynamical equation's left-hand side S.psi at time t."""
    if not isinstance(state, TimeState):
        raise StencilError("schrodinger_apply needs a TimeState for d_0 psi")
    M = schrodinger_spatial_matrix(bundle, state.grid, t, k_factor)
    return WaveFunction(state.grid, t, state.ddt(t) + M @ state.at(t))


def schrodinger_operator(bundle, grid, k_factor):
    """S as a map on TimeStates."""
    cache = {}

    def matrix(t):
        if t not in cache:
            cache[t] = schrodinger_spatial_matrix(bundle, grid, t, k_factor)
        return cache[t]

    def apply(state):
        return TimeState(grid, lambda t: state.ddt(t) + matrix(t) @ state.at(t))

    return apply


# -- quantum vector fields and Lie actions -------------------------------

def _raised_linear_coeffs(f: SpecialQuadratic, bundle):
    """The raised coefficients f^j = G^{jk} f0_k as callables on grids."""
    Ginv = bundle.metric.inverse_fields()
    n = f.n
    return [sum((Ginv[j, k] * f.fi[k] for k in range(n)),
                ScalarField.zero(n)) for j in range(n)]


def quantum_vector_field(f: SpecialQuadratic, bundle):
    """Component fields (Y0, Yj, Yz) of the quantum vector field Y[f].

    Y0 = f0, Yj = -f^j (raised), and the vertical component
    Yz = -i (f0 A_0 - f^h A_h + f_base) + (1/2) Div X[f], with
    Div X[f] = f0 d_0 sqrt|g|/sqrt|g| - d_j(f^j sqrt|g|)/sqrt|g|.
    Yz is returned as a complex-valued callable (t, xs).
    """
    if not classify(f, bundle.chart).quantisable:
        raise ClassificationError("quantum vector field requires quantisable f")
    n = f.n
    fj = _raised_linear_coeffs(f, bundle)
    sg = bundle.metric.sqrt_det_field()
    div_parts = [(fj[j] * sg).diff(j + 1) for j in range(n)]
    d0sg = sg.diff(0)

    def Yz(t, xs):
        A = np.stack([a(t, xs) for a in bundle.potential])
        fjv = np.stack([c(t, xs) for c in fj])
        sgv = sg(t, xs)
        div = (f.f0(t, xs) * d0sg(t, xs)
               - sum(p(t, xs) for p in div_parts)) / sgv
        return (-1j * (f.f0(t, xs) * A[0]
                       - np.einsum("h...,h...->...", fjv, A[1:])
                       + f.f_base(t, xs))
                + 0.5 * div)

    Yj = [-c for c in fj]
    return f.f0, Yj, Yz


def lie_action_operator(f: SpecialQuadratic, bundle, grid: SpatialGrid):
    """Z[f] = i Y[f]_bullet as a map on TimeStates."""
    Y0, Yj, Yz = quantum_vector_field(f, bundle)
    cache = {}

    def matrix(t):
        if t not in cache:
            M = diag(np.asarray(Yz(t, grid.coords()), dtype=complex))
            for j, c in enumerate(Yj):
                M = M + diag(grid.eval_field(c, t)) @ central_diff(grid, j)
            cache[t] = M.tocsr()
        return cache[t]

    def apply(state):
        def at(t):
            out = matrix(t) @ state.at(t)
            f0v = f.f0(t, [a[:1] * 0 + a[0] for a in grid.axes])
            f0v = float(np.atleast_1d(f0v)[0])
            if f0v != 0.0:
                out = out + f0v * state.ddt(t)
            return 1j * out
        return TimeState(grid, at)

    return apply


def lie_action(f: SpecialQuadratic, state: TimeState, bundle, t) -> WaveFunction:
    """Z[f].psi at time t; f with f0 != 0 needs the state's time stencil."""
    if not isinstance(state, TimeState):
        raise StencilError("lie_action needs a TimeState")
    return lie_action_operator(f, bundle, state.grid)(state).slice(t)


# -- quantum operators ---------------------------------------------------

@dataclass
class QuantumOperator:
    """The Hermitian operator f-hat on a fixed time slice."""

    source: str
    matrix: sparse.csr_matrix
    grid: SpatialGrid
    weight: np.ndarray              # sqrt|g| * cell volume on the nodes
    k_factor: float
    t: float

    def apply(self, psi: WaveFunction) -> WaveFunction:
        if psi.grid is not self.grid and psi.grid.shape != self.grid.shape:
            raise StructureError("operator/state grid mismatch")
        return psi.with_values(self.matrix @ psi.values)

    def hermiticity_defect(self):
        return gridops.hermiticity_defect(self.matrix, self.weight)


def quantum_operator(f: SpecialQuadratic, bundle, k_factor=0.0,
                     grid=None, t=0.0) -> QuantumOperator:
    """The quantum operator
    f-hat = -1/2 f0 Laplacian - i f^j nabla_j + f_base + 1/2 k f0 r0
            - (i/2) d_j(f^j sqrt|g|)/sqrt|g|,
    acting fibrewise (no time stencil needed)."""
    if not classify(f, bundle.chart).quantisable:
        raise ClassificationError(
            f"function {f.name or '<unnamed>'} is not quantisable")
    grid = grid if grid is not None else SpatialGrid.from_chart(bundle.chart)
    n = bundle.n
    center = [0.5 * (lo + hi) for lo, hi in bundle.chart.extents]
    f0 = float(f.f0(t, center))
    w = _weight(bundle, grid, t)
    fj = [eval_on_grid(c, grid, t) for c in _raised_linear_coeffs(f, bundle)]
    M = sparse.csr_matrix((grid.size, grid.size), dtype=complex)
    if f0 != 0.0:
        M = M - 0.5 * f0 * laplacian_matrix(bundle, grid, t)
        if k_factor != 0.0:
            M = M + 0.5 * k_factor * f0 * diag(curvature_values(bundle, grid, t))
    if any(np.any(c != 0.0) for c in fj):
        M = M + sym_advection_matrix(grid, w, fj)
        A = _potential_values(bundle, grid, t)
        M = M - diag(np.einsum("jp,jp->p", np.stack(fj), A[1:]))
    M = M + diag(eval_on_grid(f.f_base, grid, t)).astype(complex)
    return QuantumOperator(f.name or "f", M.tocsr(), grid,
                           w * grid.cell_volume(), k_factor, t)


# -- commutator and obstruction ------------------------------------------

def support_margin_check(psi: WaveFunction, cells=5, tol=1e-10):
    """Reject test states with relative mass near the Dirichlet boundary."""
    v = np.abs(psi.values_nd) ** 2
    total = float(v.sum())
    if total == 0.0:
        raise TestStateError("zero test state")
    edge = 0.0
    for axis in range(v.ndim):
        sl = [slice(None)] * v.ndim
        sl[axis] = slice(0, cells)
        edge += float(v[tuple(sl)].sum())
        sl[axis] = slice(-cells, None)
        edge += float(v[tuple(sl)].sum())
    if edge / total > tol:
        raise TestStateError(
            f"test state has boundary mass fraction {edge / total:.2e}")


@dataclass
class CommutatorReport:
    residual: float
    lhs_norm: float
    bracket_norm: float
    obstruction_norm: float
    obstruction_active: bool


def commutator_check(f: SpecialQuadratic, g: SpecialQuadratic,
                     state: AnalyticState, bundle, k_factor=0.0,
                     t=0.0, interior_fraction=0.5,
                     bracket=None) -> CommutatorReport:
    """Evaluate [f-hat, g-hat] psi against bracket-hat psi plus the
    obstruction term [(g'' Y[f]_bullet - f'' Y[g]_bullet), S] psi, with
    the commutator convention [h, k] = -i (h k - k h).

    The residual is the max-norm over the interior fraction of the grid.
    When f'' = g'' = 0 the obstruction term is dropped analytically.
    """
    grid = state.grid
    support_margin_check(state.slice(t))
    Mf = quantum_operator(f, bundle, k_factor, grid, t).matrix
    Mg = quantum_operator(g, bundle, k_factor, grid, t).matrix
    psi = state.at(t)
    lhs = -1j * (Mf @ (Mg @ psi) - Mg @ (Mf @ psi))

    from .falg import special_bracket
    br = bracket if bracket is not None else special_bracket(f, g, bundle)
    rhs = quantum_operator(br, bundle, k_factor, grid, t).matrix @ psi

    center = [0.5 * (lo + hi) for lo, hi in bundle.chart.extents]
    f0 = float(f.f0(t, center))
    g0 = float(g.f0(t, center))
    active = f0 != 0.0 or g0 != 0.0
    obs = np.zeros_like(psi)
    if active:
        S = schrodinger_operator(bundle, grid, k_factor)
        Zf = lie_action_operator(f, bundle, grid)
        Zg = lie_action_operator(g, bundle, grid)

        def B(s):
            # g'' Y[f]_bullet - f'' Y[g]_bullet = -i (g0 Z[f] - f0 Z[g])
            def at(tt):
                out = np.zeros(grid.size, dtype=complex)
                if g0 != 0.0:
                    out = out + g0 * Zf(s).at(tt)
                if f0 != 0.0:
                    out = out - f0 * Zg(s).at(tt)
                return -1j * out
            return TimeState(grid, at)

        obs = -1j * (B(S(state)).at(t) - schrodinger_apply(B(state), bundle,
                                                           k_factor, t).values)
    mask = _interior_mask(grid, interior_fraction)
    resid = float(np.max(np.abs((lhs - rhs - obs)[mask])))
    return CommutatorReport(resid, float(np.max(np.abs(lhs[mask]))),
                            float(np.max(np.abs(rhs[mask]))),
                            float(np.max(np.abs(obs[mask]))), active)


def _interior_mask(grid, fraction):
    masks = []
    for a, (lo, hi) in zip(grid.axes, grid.extents):
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * fraction
        masks.append((a >= c - half) & (a <= c + half))
    m = masks[0]
    for extra in masks[1:]:
        m = np.multiply.outer(m, extra)
    return m.ravel()


# -- probability current -------------------------------------------------

def probability_current(psi: WaveFunction, bundle):
    """Noether current of the quantum Lagrangian:
    j0 = |psi|^2 sqrt|g|; j^i = sqrt|g| G^{ij} Im(conj(psi) nabla_j psi)."""
    grid, t = psi.grid, psi.t
    w = _weight(bundle, grid, t)
    j0 = w * np.abs(psi.values) ** 2
    n = bundle.n
    Ginv_v = _inverse_metric_values(bundle, grid, t)
    cds = [covariant_derivative_matrix(bundle, grid, t, j + 1) @ psi.values
           for j in range(n)]
    imag = np.stack([np.imag(np.conj(psi.values) * c) for c in cds])
    ji = w * np.einsum("ijp,jp->ip", Ginv_v, imag)
    return j0, ji


def continuity_residual(state: TimeState, bundle, t, step=_TIME_STEP,
                        interior_fraction=0.5):
    """Max-norm of d_0 j0 + d_i j^i over the interior, for a TimeState."""
    grid = state.grid

    def j0_at(tt):
        return probability_current(state.slice(tt), bundle)[0]

    dj0 = (-j0_at(t + 2 * step) + 8 * j0_at(t + step)
           - 8 * j0_at(t - step) + j0_at(t - 2 * step)) / (12 * step)
    _, ji = probability_current(state.slice(t), bundle)
    div = dj0.astype(float)
    for i in range(bundle.n):
        div = div + central_diff(grid, i) @ ji[i]
    return float(np.max(np.abs(div[_interior_mask(grid, interior_fraction)])))
