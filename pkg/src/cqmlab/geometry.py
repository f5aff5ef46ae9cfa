"""Spacetime charts, spacelike metric, connections and structural validation.

Connection coefficients K_lam^h_mu follow the convention
``nabla_lam u^h = d_lam u^h - K_lam^h_mu u^mu``, i.e. for the Levi-Civita
connection of the fibre metric K equals minus the Christoffel symbols.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import DegeneracyError, DomainError, ResolutionError, StructureError
from .fields import (ScalarField, all_symbolic, as_field, chart_symbols,
                     eval_field_array, field_array, zero_field_array)


@dataclass(frozen=True)
class FibredChart:
    """A single chart box: n spatial axes with extents and grid resolution."""

    n: int
    extents: tuple
    grid_points: tuple
    time_step: float = 1e-3

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise DomainError(f"spatial dimension must be 1..3, got {self.n}")
        object.__setattr__(self, "extents",
                           tuple((float(a), float(b)) for a, b in self.extents))
        gp = self.grid_points
        if np.isscalar(gp):
            gp = (gp,) * self.n
        object.__setattr__(self, "grid_points", tuple(int(p) for p in gp))
        if len(self.extents) != self.n or len(self.grid_points) != self.n:
            raise StructureError("extents and grid_points must have length n")
        for lo, hi in self.extents:
            if not hi > lo:
                raise DomainError(f"extent ({lo}, {hi}) has nonpositive length")
        for p in self.grid_points:
            if p < 4:
                raise ResolutionError(f"need at least 4 grid points per axis, got {p}")
        if not self.time_step > 0:
            raise DomainError("time_step must be positive")

    def contains(self, x) -> bool:
        x = np.atleast_1d(x)
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, self.extents))

    def sample_axes(self, per_axis=4, margin=0.0):
        """Deterministic interior sample coordinates for residual evaluation."""
        axes = []
        for lo, hi in self.extents:
            pad = margin * (hi - lo) + 0.05 * (hi - lo)
            axes.append(np.linspace(lo + pad, hi - pad, per_axis))
        return axes


def _sample_points(chart, per_axis=4, times=(0.0, 0.5, 1.0)):
    axes = chart.sample_axes(per_axis)
    meshes = np.meshgrid(np.asarray(times), *axes, indexing="ij")
    t = meshes[0].ravel()
    xs = [m.ravel() for m in meshes[1:]]
    return t, xs


class SpacelikeMetric:
    """The rescaled fibre metric G as an (n, n) array of scalar fields."""

    def __init__(self, components):
        comps = field_array(components, _infer_n(components))
        if comps.ndim != 2 or comps.shape[0] != comps.shape[1]:
            raise StructureError(f"metric components must be square, got {comps.shape}")
        self.n = comps.shape[0]
        self.components = comps
        self._inverse = None
        self._sqrt_det = None

    @classmethod
    def flat(cls, n):
        rows = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
        return cls([[as_field(v, n) for v in row] for row in rows])

    def at(self, t, x):
        return eval_field_array(self.components, t, x)

    def inv_at(self, t, x):
        G = self.at(t, x)
        if G.ndim == 2:
            return np.linalg.inv(G)
        return np.moveaxis(np.linalg.inv(np.moveaxis(G, (0, 1), (-2, -1))),
                           (-2, -1), (0, 1))

    def inverse_fields(self):
        """Inverse metric components as fields (symbolic when possible)."""
        if self._inverse is not None:
            return self._inverse
        n = self.n
        if all_symbolic(self.components):
            M = sp.Matrix([[self.components[i, j].expr for j in range(n)]
                           for i in range(n)])
            Minv = M.inv()
            inv = field_array([[sp.together(Minv[i, j]) for j in range(n)]
                               for i in range(n)], n)
        else:
            inv = np.empty((n, n), dtype=object)
            for i in range(n):
                for j in range(n):
                    inv[i, j] = ScalarField.from_callable(
                        _inv_component(self, i, j), n, pointwise=True)
        self._inverse = inv
        return inv

    def sqrt_det_field(self):
        """sqrt(det G) as a field; the density weight used everywhere."""
        if self._sqrt_det is not None:
            return self._sqrt_det
        n = self.n
        if all_symbolic(self.components):
            M = sp.Matrix([[self.components[i, j].expr for j in range(n)]
                           for i in range(n)])
            out = ScalarField.from_expression(sp.sqrt(M.det()), n)
        else:
            def f(t, *xs):
                G = self.at(t, list(xs))
                det = np.linalg.det(np.moveaxis(G, (0, 1), (-2, -1)))
                return np.sqrt(det)
            out = ScalarField(f, n)
        self._sqrt_det = out
        return out

    def check_positive_definite(self, t, x):
        G = self.at(t, x)
        w = np.linalg.eigvalsh(G)
        if np.any(w <= 0):
            raise DegeneracyError(f"metric not positive definite at t={t}, x={x}")


def _inv_component(metric, i, j):
    def f(t, *xs):
        return np.linalg.inv(metric.at(t, list(xs)))[i, j]
    return f


def _infer_n(components):
    return len(components)


class SpacetimeConnection:
    """Coefficients K_lam^h_mu, stored as an (n+1, n, n+1) field array."""

    def __init__(self, coeffs, n=None):
        if n is None:
            n = np.asarray(coeffs, dtype=object).shape[1]
        coeffs = field_array(coeffs, n, shape=(n + 1, n, n + 1))
        self.n = n
        self.coeffs = coeffs

    @classmethod
    def zero(cls, n):
        return cls(zero_field_array((n + 1, n, n + 1), n), n=n)

    @classmethod
    def from_map(cls, entries, n):
        """Build from a sparse {"lam_h_mu": expr} map, symmetrizing in (lam, mu)."""
        coeffs = zero_field_array((n + 1, n, n + 1), n)
        for key, expr in entries.items():
            lam, h, mu = (int(s) for s in key.split("_"))
            if not (0 <= lam <= n and 1 <= h <= n and 0 <= mu <= n):
                raise StructureError(f"connection index {key!r} out of range")
            f = as_field(expr, n)
            coeffs[lam, h - 1, mu] = f
            coeffs[mu, h - 1, lam] = f
        return cls(coeffs, n=n)

    def at(self, t, x):
        return eval_field_array(self.coeffs, t, x)

    def __add__(self, other):
        if self.n != other.n:
            raise StructureError("connection dimensions differ")
        out = np.empty_like(self.coeffs)
        for idx in np.ndindex(*self.coeffs.shape):
            out[idx] = self.coeffs[idx] + other.coeffs[idx]
        return SpacetimeConnection(out, n=self.n)


class EMField:
    """Rescaled electromagnetic 2-form F_{lam mu} as an antisymmetric field array."""

    def __init__(self, components, n=None):
        if n is None:
            n = np.asarray(components, dtype=object).shape[0] - 1
        comps = field_array(components, n, shape=(n + 1, n + 1))
        self.n = n
        self.components = comps

    @classmethod
    def zero(cls, n):
        return cls(zero_field_array((n + 1, n + 1), n), n=n)

    @classmethod
    def from_map(cls, entries, n):
        comps = zero_field_array((n + 1, n + 1), n)
        for key, expr in entries.items():
            lam, mu = (int(s) for s in key.split("_"))
            if not (0 <= lam <= n and 0 <= mu <= n) or lam == mu:
                raise StructureError(f"em index {key!r} out of range")
            f = as_field(expr, n)
            comps[lam, mu] = f
            comps[mu, lam] = -f
        return cls(comps, n=n)

    @classmethod
    def from_potential(cls, potential, n):
        """Closed 2-form F = dA from a 1-form potential (A_0..A_n)."""
        A = field_array(potential, n, shape=(n + 1,))
        comps = zero_field_array((n + 1, n + 1), n)
        for lam in range(n + 1):
            for mu in range(lam + 1, n + 1):
                f = A[mu].diff(lam) - A[lam].diff(mu)
                comps[lam, mu] = f
                comps[mu, lam] = -f
        return cls(comps, n=n)

    def at(self, t, x):
        return eval_field_array(self.components, t, x)


def compose_total_connection(grav: SpacetimeConnection, em: EMField,
                             metric: SpacelikeMetric) -> SpacetimeConnection:
    """Total spacetime connection: gravity plus the metric-raised EM correction.

    Purely spatial coefficients are untouched; the mixed ones gain F^h_j / 2
    and the 0^h_0 one gains the full F^h_0, which is what closure of the
    phase-space 2-form and the Lorentz force both require.
    """
    n = grav.n
    if em.n != n or metric.n != n:
        raise StructureError("grav, em and metric dimensions differ")
    Ginv = metric.inverse_fields()
    coeffs = np.copy(grav.coeffs)

    def raised(h, mu):
        # F^h_mu = G^{hk} F_{k mu}
        total = Ginv[h, 0] * em.components[1, mu]
        for k in range(1, n):
            total = total + Ginv[h, k] * em.components[k + 1, mu]
        return total

    for h in range(n):
        for j in range(1, n + 1):
            corr = 0.5 * raised(h, j)
            coeffs[0, h, j] = coeffs[0, h, j] + corr
            coeffs[j, h, 0] = coeffs[j, h, 0] + corr
        coeffs[0, h, 0] = coeffs[0, h, 0] + raised(h, 0)
    return SpacetimeConnection(coeffs, n=n)


def christoffel_fields(metric: SpacelikeMetric):
    """Fibre Christoffel symbols Gamma^h_{ij} of G(t, .) as a field array."""
    n = metric.n
    Ginv = metric.inverse_fields()
    G = metric.components
    dG = np.empty((n, n, n), dtype=object)  # dG[k, i, j] = d_{x_{k+1}} G_ij
    for k in range(n):
        for i in range(n):
            for j in range(n):
                dG[k, i, j] = G[i, j].diff(k + 1)
    Gamma = np.empty((n, n, n), dtype=object)
    for h in range(n):
        for i in range(n):
            for j in range(n):
                acc = None
                for k in range(n):
                    term = Ginv[h, k] * (dG[i, k, j] + dG[j, k, i] - dG[k, i, j])
                    acc = term if acc is None else acc + term
                Gamma[h, i, j] = 0.5 * acc
    return Gamma


def levi_civita_connection(metric: SpacelikeMetric) -> SpacetimeConnection:
    """Metric-compatible torsion-free connection with K = -Gamma on the fibres.

    Time components follow the metric's time dependence so that
    nabla_0 G = 0; for a static metric they vanish.
    """
    n = metric.n
    Gamma = christoffel_fields(metric)
    Ginv = metric.inverse_fields()
    coeffs = zero_field_array((n + 1, n, n + 1), n)
    for h in range(n):
        for i in range(n):
            for j in range(n):
                coeffs[i + 1, h, j + 1] = -Gamma[h, i, j]
    time_dependent = any(not G.diff(0).is_zero() for G in metric.components.ravel())
    if time_dependent:
        for h in range(n):
            for j in range(n):
                acc = None
                for k in range(n):
                    term = Ginv[h, k] * metric.components[k, j].diff(0)
                    acc = term if acc is None else acc + term
                coeffs[0, h, j + 1] = -0.5 * acc
                coeffs[j + 1, h, 0] = coeffs[0, h, j + 1]
    return SpacetimeConnection(coeffs, n=n)


def scalar_curvature_field(metric: SpacelikeMetric) -> ScalarField:
    """Scalar curvature of the fibre metric G(t, .) as a field on the chart."""
    n = metric.n
    if n == 1:
        return ScalarField.zero(1)
    Gamma = christoffel_fields(metric)
    Ginv = metric.inverse_fields()
    terms = []
    for i in range(n):
        for j in range(n):
            # Ricci_ij = d_k Gamma^k_ij - d_i Gamma^k_kj
            #            + Gamma^k_kl Gamma^l_ij - Gamma^k_il Gamma^l_kj
            ric = None
            for k in range(n):
                t1 = Gamma[k, i, j].diff(k + 1) - Gamma[k, k, j].diff(i + 1)
                ric = t1 if ric is None else ric + t1
                for l in range(n):
                    t2 = Gamma[k, k, l] * Gamma[l, i, j] - Gamma[k, i, l] * Gamma[l, k, j]
                    ric = ric + t2
            terms.append(Ginv[i, j] * ric)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    if total.symbolic:
        total = ScalarField.from_expression(sp.cancel(sp.together(total.expr)), n)
    return total


def scalar_curvature(metric: SpacelikeMetric, t):
    """Fibrewise scalar curvature at time t, as a map xs -> r(t, xs)."""
    r = scalar_curvature_field(metric)
    return lambda xs: r(t, xs)


@dataclass
class GeometryBundle:
    chart: FibredChart
    metric: SpacelikeMetric
    grav: SpacetimeConnection
    em: EMField
    potential: np.ndarray  # (n+1,) field array, the Poincare-Cartan gauge A_lam
    total: SpacetimeConnection = None

    def __post_init__(self):
        n = self.chart.n
        if not (self.metric.n == self.grav.n == self.em.n == n):
            raise StructureError("bundle parts disagree on spatial dimension")
        self.potential = field_array(self.potential, n, shape=(n + 1,))
        if self.total is None:
            self.total = compose_total_connection(self.grav, self.em, self.metric)

    @property
    def n(self):
        return self.chart.n


def make_bundle(chart, metric=None, grav=None, em=None, potential=None) -> GeometryBundle:
    """Assemble a bundle, defaulting to the flat free configuration."""
    n = chart.n
    metric = metric if metric is not None else SpacelikeMetric.flat(n)
    if grav is None:
        grav = levi_civita_connection(metric)
    em = em if em is not None else EMField.zero(n)
    if potential is None:
        potential = zero_field_array((n + 1,), n)
    return GeometryBundle(chart, metric, grav, em, potential)


def bundle_from_potential(chart, metric=None, potential=None, grav=None) -> GeometryBundle:
    """Bundle whose EM 2-form is the exterior derivative of the gauge potential.

    This keeps the classical force, the Poincare-Cartan split and the quantum
    covariant derivatives mutually consistent.
    """
    n = chart.n
    metric = metric if metric is not None else SpacelikeMetric.flat(n)
    if potential is None:
        potential = zero_field_array((n + 1,), n)
    potential = field_array(potential, n, shape=(n + 1,))
    em = EMField.from_potential(potential, n)
    if grav is None:
        grav = levi_civita_connection(metric)
    return GeometryBundle(chart, metric, grav, em, potential)


@dataclass
class GeometryReport:
    """Max-norm structural residuals over the sampled chart points."""

    residuals: dict
    notes: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return max(self.residuals.values())

    def ok(self, tol):
        return self.max_residual <= tol

    def __str__(self):
        lines = [f"  {k:24s} {v:.3e}" for k, v in self.residuals.items()]
        return "geometry residuals:\n" + "\n".join(lines)


def validate_geometry(bundle: GeometryBundle, per_axis=4,
                      times=(0.0, 0.5, 1.0)) -> GeometryReport:
    """Evaluate the structural conditions on the bundle as residuals.

    Checks: torsion freedom of the total connection, metric compatibility
    nabla G = 0, symmetry of the raised curvature tensor, closedness of the
    EM 2-form, and agreement of the stored total connection with the
    gravity+EM composition.
    """
    n = bundle.n
    t, xs = _sample_points(bundle.chart, per_axis, times)
    npts = t.size

    K = bundle.total.coeffs
    Kv = eval_field_array(K, t, xs)                     # (n+1, n, n+1, P)
    dK = np.empty((n + 1, n + 1, n, n + 1), dtype=object)
    for a in range(n + 1):
        for idx in np.ndindex(n + 1, n, n + 1):
            dK[(a,) + idx] = K[idx].diff(a)
    dKv = eval_field_array(dK, t, xs)                   # (n+1, n+1, n, n+1, P)

    Gv = eval_field_array(bundle.metric.components, t, xs)   # (n, n, P)
    Ginv_v = np.moveaxis(np.linalg.inv(np.moveaxis(Gv, (0, 1), (-2, -1))),
                         (-2, -1), (0, 1))
    dG = np.empty((n + 1, n, n), dtype=object)
    for a in range(n + 1):
        for i in range(n):
            for j in range(n):
                dG[a, i, j] = bundle.metric.components[i, j].diff(a)
    dGv = eval_field_array(dG, t, xs)                   # (n+1, n, n, P)

    residuals = {}
    notes = {}

    # torsion: K_lam^h_mu - K_mu^h_lam
    residuals["torsion"] = float(np.max(np.abs(
        Kv - np.transpose(Kv, (2, 1, 0, 3)))))

    # metric compatibility: d_lam G_ij + K_lam^h_i G_hj + K_lam^h_j G_ih
    Kspat = Kv[:, :, 1:, :]                             # K_lam^h_i, i spatial
    compat = (dGv
              + np.einsum("lhip,hjp->lijp", Kspat, Gv)
              + np.einsum("lhjp,ihp->lijp", Kspat, Gv))
    residuals["metric_compatibility"] = float(np.max(np.abs(compat)))

    # curvature R_{lam mu}^i_nu of the *gravitational* connection and the
    # raised-symmetry condition; the EM correction is covered by em_closedness
    Kg = bundle.grav.coeffs
    Kgv = eval_field_array(Kg, t, xs)
    dKg = np.empty((n + 1, n + 1, n, n + 1), dtype=object)
    for a in range(n + 1):
        for idx in np.ndindex(n + 1, n, n + 1):
            dKg[(a,) + idx] = Kg[idx].diff(a)
    dKgv = eval_field_array(dKg, t, xs)
    R = np.empty((n + 1, n + 1, n, n + 1, npts))
    for lam in range(n + 1):
        for mu in range(n + 1):
            # with K = -Gamma this is minus the Riemann tensor of Gamma,
            # which shares all of its symmetries
            R[lam, mu] = dKgv[lam, mu] - dKgv[mu, lam]
            R[lam, mu] -= np.einsum("ihp,hnp->inp", Kgv[lam, :, 1:], Kgv[mu])
            R[lam, mu] += np.einsum("ihp,hnp->inp", Kgv[mu, :, 1:], Kgv[lam])
    Rup = np.einsum("lminp,njp->limjp", R[:, :, :, 1:, :], Ginv_v)
    sym_res = Rup - np.transpose(Rup, (2, 3, 0, 1, 4))
    residuals["curvature_symmetry"] = float(np.max(np.abs(sym_res)))
    # spatial block of the fully lowered tensor and its pair-exchange symmetry
    Rdn = np.einsum("lminp,ijp->lmnjp", R[1:, 1:, :, 1:, :], Gv)
    notes["curvature_symmetry_lowered"] = float(np.max(np.abs(
        Rdn - np.transpose(Rdn, (2, 3, 0, 1, 4)))))

    # closedness of F
    if n >= 2:
        F = bundle.em.components
        dF = np.empty((n + 1, n + 1, n + 1), dtype=object)
        for a in range(n + 1):
            for lam in range(n + 1):
                for mu in range(n + 1):
                    dF[a, lam, mu] = F[lam, mu].diff(a)
        dFv = eval_field_array(dF, t, xs)
        closure = dFv + np.transpose(dFv, (1, 2, 0, 3)) + np.transpose(dFv, (2, 0, 1, 3))
        residuals["em_closedness"] = float(np.max(np.abs(closure)))
    else:
        residuals["em_closedness"] = 0.0

    # agreement of stored total with compose(grav, em)
    recomposed = compose_total_connection(bundle.grav, bundle.em, bundle.metric)
    Rv = eval_field_array(recomposed.coeffs, t, xs)
    residuals["total_consistency"] = float(np.max(np.abs(Kv - Rv)))

    return GeometryReport(residuals, notes)
