"""The Lie algebra of special quadratic phase functions.

A special quadratic function is represented by its three coefficient
fields:  f = (1/2) f0 G_ij v^i v^j + fi_i v^i + f_base.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ClassificationError, InternalConsistencyError
from .fields import ScalarField, as_field, eval_field_array, field_array
from .geometry import GeometryBundle
from .phase import PhasePoint, build_gamma, build_omega, hamiltonian_lift


@dataclass(frozen=True)
class Classification:
    quantisable: bool
    constant_time: bool
    affine: bool
    spacetime: bool


@dataclass(frozen=True)
class SpecialQuadratic:
    """Coefficient triple (f0, fi, f_base) of a special quadratic function."""

    f0: ScalarField
    fi: tuple
    f_base: ScalarField
    name: str = ""

    @property
    def n(self):
        return len(self.fi)

    @classmethod
    def build(cls, f0, fi, f_base, n, name=""):
        return cls(as_field(f0, n),
                   tuple(as_field(c, n) for c in fi),
                   as_field(f_base, n), name=name)

    def value(self, bundle: GeometryBundle, point: PhasePoint) -> float:
        G = bundle.metric.at(point.t, point.x)
        fiv = np.array([c(point.t, point.x) for c in self.fi])
        return float(0.5 * self.f0(point.t, point.x) * point.v @ G @ point.v
                     + fiv @ point.v + self.f_base(point.t, point.x))

    def phase_function(self, bundle: GeometryBundle):
        """Return (value, gradient) callables; gradient is ordered (t, x, v)."""
        n = self.n
        G = bundle.metric.components
        dG = [[[G[i][j].diff(a) for j in range(n)] for i in range(n)]
              for a in range(n + 1)]
        df0 = [self.f0.diff(a) for a in range(n + 1)]
        dfi = [[c.diff(a) for c in self.fi] for a in range(n + 1)]
        dfb = [self.f_base.diff(a) for a in range(n + 1)]

        def value(point):
            return self.value(bundle, point)

        def gradient(point):
            t, x, v = point.t, point.x, point.v
            Gv = bundle.metric.at(t, x)
            f0v = self.f0(t, x)
            fiv = np.array([c(t, x) for c in self.fi])
            out = np.empty(2 * n + 1)
            for a in range(n + 1):
                dGv = np.array([[dG[a][i][j](t, x) for j in range(n)]
                                for i in range(n)])
                out[a] = (0.5 * df0[a](t, x) * v @ Gv @ v
                          + 0.5 * f0v * v @ dGv @ v
                          + np.array([c(t, x) for c in dfi[a]]) @ v
                          + dfb[a](t, x))
            out[n + 1:] = f0v * (Gv @ v) + fiv
            return out

        return value, gradient


# -- standard functions --------------------------------------------------

def coordinate_function(bundle: GeometryBundle, i: int) -> SpecialQuadratic:
    """The spacetime coordinate x^i (1-based) as a special quadratic."""
    n = bundle.n
    return SpecialQuadratic.build(0, [0] * n, f"x{i}", n, name=f"x{i}")


def momentum_function(bundle: GeometryBundle, j: int) -> SpecialQuadratic:
    """The observed momentum component P_j = G_jk v^k + A_j (1-based j)."""
    n = bundle.n
    fi = [bundle.metric.components[j - 1, k] for k in range(n)]
    return SpecialQuadratic(ScalarField.zero(n), tuple(fi),
                            bundle.potential[j], name=f"P{j}")


def hamiltonian_function(bundle: GeometryBundle) -> SpecialQuadratic:
    """The observed Hamiltonian H0 = (1/2) G_ij v^i v^j - A_0."""
    n = bundle.n
    return SpecialQuadratic(ScalarField.constant(1, n),
                            tuple(ScalarField.zero(n) for _ in range(n)),
                            -bundle.potential[0], name="H0")


# -- classification ------------------------------------------------------

def classify(f: SpecialQuadratic, chart=None, tol=1e-10,
             times=(0.0, 0.37, 1.0)) -> Classification:
    """Classify into the subalgebra chain by sampling the coefficient fields."""
    n = f.n
    if chart is not None:
        axes = chart.sample_axes(5)
    else:
        axes = [np.linspace(-1.0, 1.0, 5) for _ in range(n)]
    meshes = np.meshgrid(np.asarray(times), *axes, indexing="ij")
    t = meshes[0].ravel()
    xs = [m.ravel() for m in meshes[1:]]

    def is_zero(field):
        if field.is_zero():
            return True
        return float(np.max(np.abs(field(t, xs)))) <= tol

    # spatial constancy is judged on value spreads, not finite-difference
    # gradients, so callable-backed coefficients are not drowned in
    # differencing noise
    f0_vals = np.asarray(f.f0(t, xs)).reshape(meshes[0].shape)
    per_slice = f0_vals.reshape(len(times), -1)
    scale = max(1.0, float(np.max(np.abs(f0_vals))))
    spatial_spread = float(np.max(per_slice.max(axis=1) - per_slice.min(axis=1)))
    total_spread = float(f0_vals.max() - f0_vals.min())
    f0_spatially_const = spatial_spread <= tol * scale
    f0_const = total_spread <= tol * scale
    f0_zero = float(np.max(np.abs(f0_vals))) <= tol
    fi_zero = all(is_zero(c) for c in f.fi)
    return Classification(quantisable=f0_spatially_const,
                          constant_time=f0_const,
                          affine=f0_zero,
                          spacetime=f0_zero and fi_zero)


# -- the special bracket -------------------------------------------------

def special_bracket(f: SpecialQuadratic, g: SpecialQuadratic,
                    bundle: GeometryBundle, tol=1e-6) -> SpecialQuadratic:
    """Special bracket [[f, g]] = {f, g} + gamma(f'').g - gamma(g'').f.

    The result's coefficients are recovered by exact quadratic
    interpolation in the velocity at v in {0, +-e_i, e_i+e_j}; residual
    cubic dependence or a quadratic part not proportional to G raises
    InternalConsistencyError.
    """
    n = f.n
    omega = build_omega(bundle)
    gamma = build_gamma(bundle)
    _, fgrad = f.phase_function(bundle)
    _, ggrad = g.phase_function(bundle)
    f0f, g0f = f.f0, g.f0

    def h(t, x, v):
        p = PhasePoint(t, x, v)
        df = fgrad(p)
        dg = ggrad(p)
        Hf = hamiltonian_lift(omega, df, p)
        lift = gamma.lifted(p)
        return float(dg @ Hf + f0f(t, x) * (dg @ lift) - g0f(t, x) * (df @ lift))

    @lru_cache(maxsize=65536)
    def extract(t, *xc):
        x = np.array(xc)
        G = bundle.metric.at(t, x)
        e = np.eye(n)
        c = h(t, x, np.zeros(n))
        hp = np.array([h(t, x, e[i]) for i in range(n)])
        hm = np.array([h(t, x, -e[i]) for i in range(n)])
        b = 0.5 * (hp - hm)
        Q = np.zeros((n, n))
        for i in range(n):
            Q[i, i] = hp[i] + hm[i] - 2.0 * c
        for i in range(n):
            for j in range(i + 1, n):
                Q[i, j] = Q[j, i] = h(t, x, e[i] + e[j]) - hp[i] - hp[j] + c
        scale = max(1.0, abs(c), float(np.max(np.abs(hp))), float(np.max(np.abs(hm))))
        cubic = h(t, x, 2.0 * e[0]) - (2.0 * Q[0, 0] + 2.0 * b[0] + c)
        if abs(cubic) > tol * scale:
            raise InternalConsistencyError(
                f"bracket has residual cubic velocity dependence {cubic:.3e}")
        f0_out = float(np.trace(np.linalg.solve(G, Q))) / n
        if np.max(np.abs(Q - f0_out * G)) > tol * scale:
            raise InternalConsistencyError(
                "bracket quadratic part is not proportional to the metric")
        return f0_out, tuple(b), c

    name = f"[[{f.name or 'f'},{g.name or 'g'}]]"
    f0_field = ScalarField.from_callable(
        lambda t, *xc: extract(float(t), *map(float, xc))[0], n, pointwise=True)
    fi_fields = tuple(
        ScalarField.from_callable(
            (lambda i: lambda t, *xc: extract(float(t), *map(float, xc))[1][i])(i),
            n, pointwise=True)
        for i in range(n))
    fb_field = ScalarField.from_callable(
        lambda t, *xc: extract(float(t), *map(float, xc))[2], n, pointwise=True)
    return SpecialQuadratic(f0_field, fi_fields, fb_field, name=name)


# -- the tangent lift ----------------------------------------------------

def tangent_lift(f: SpecialQuadratic, bundle: GeometryBundle):
    """Spacetime vector field X[f] = f0 d_0 - f^i d_i for quantisable f.

    Returns a callable (t, x) -> components (X^0, X^1..X^n).
    """
    if not classify(f, bundle.chart).quantisable:
        raise ClassificationError("tangent lift requires a quantisable function")
    n = f.n
    fi = field_array(list(f.fi), n, shape=(n,))

    def X(t, x):
        Ginv = bundle.metric.inv_at(t, x)
        fiv = eval_field_array(fi, t, x)
        out = np.empty(n + 1)
        out[0] = f.f0(t, x)
        out[1:] = -Ginv @ fiv
        return out

    return X
