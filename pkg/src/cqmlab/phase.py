"""Phase space (x^0, x^i; x^i_0): cosymplectic form, second-order connection,
classical trajectories, Poincare-Cartan split and Poisson bracket."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChartBoundaryError, DegeneracyError, DomainError
from .fields import eval_field_array
from .geometry import GeometryBundle


@dataclass(frozen=True)
class PhasePoint:
    """A point (t, x, v) of the first jet space, v the observed velocity."""

    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if self.x.shape != self.v.shape:
            raise DomainError("x and v must have the same dimension")

    @property
    def n(self):
        return self.x.size

    def coords(self):
        """Flat coordinate vector (t, x, v) of length 2n+1."""
        return np.concatenate(([self.t], self.x, self.v))


def _point_from_coords(c, n):
    return PhasePoint(float(c[0]), c[1:n + 1], c[n + 1:])


class CosymplecticForm:
    """Evaluator of the 2-form components in the basis (dx^0, dx^i, dx^i_0)."""

    def __init__(self, bundle: GeometryBundle):
        self.bundle = bundle
        self.n = bundle.n

    def matrix(self, point: PhasePoint) -> np.ndarray:
        n = self.n
        t, x, v = point.t, point.x, point.v
        G = self.bundle.metric.at(t, x)                  # (n, n)
        K = self.bundle.total.at(t, x)                   # (n+1, n, n+1)
        # Phi[lam, i] = K_lam^i_0 + K_lam^i_h v^h
        Phi = K[:, :, 0] + np.einsum("lih,h->li", K[:, :, 1:], v)
        dim = 2 * n + 1
        alpha = np.zeros((n, dim))
        beta = np.zeros((n, dim))
        for i in range(n):
            alpha[i, 0] = -Phi[0, i]
            alpha[i, 1:n + 1] = -Phi[1:, i]
            alpha[i, n + 1 + i] = 1.0
            beta[i, 0] = -v[i]
            beta[i, 1 + i] = 1.0
        M = np.einsum("ia,ij,jb->ab", alpha, G, beta)
        return M - M.T

    def rank(self, point, rtol=1e-10):
        s = np.linalg.svd(self.matrix(point), compute_uv=False)
        return int(np.sum(s > rtol * s[0]))

    def kernel_direction(self, point, rtol=1e-10):
        """The unique kernel direction, normalized to unit time component."""
        M = self.matrix(point)
        _, s, vh = np.linalg.svd(M)
        small = s < rtol * s[0]
        if small.sum() != 1:
            raise DegeneracyError(f"kernel dimension {small.sum()} at {point}")
        k = vh[-1]
        if abs(k[0]) < 1e-12:
            raise DegeneracyError(f"kernel has no time component at {point}")
        return k / k[0]

    def closure_residual(self, points, step=1e-4):
        """Max |dOmega| component over the given points, by central differences."""
        dim = 2 * self.n + 1
        worst = 0.0
        for p in points:
            c0 = p.coords()
            dM = np.empty((dim, dim, dim))
            for a in range(dim):
                cp, cm = c0.copy(), c0.copy()
                cp[a] += step
                cm[a] -= step
                dM[a] = (self.matrix(_point_from_coords(cp, self.n))
                         - self.matrix(_point_from_coords(cm, self.n))) / (2 * step)
            closure = dM + np.transpose(dM, (1, 2, 0)) + np.transpose(dM, (2, 0, 1))
            worst = max(worst, float(np.max(np.abs(closure))))
        return worst


def build_omega(bundle: GeometryBundle) -> CosymplecticForm:
    return CosymplecticForm(bundle)


class SecondOrderConnection:
    """Acceleration field gamma^h(t, x, v) with i_gamma Omega = 0."""

    def __init__(self, bundle: GeometryBundle):
        self.bundle = bundle
        self.n = bundle.n

    def accel(self, point: PhasePoint) -> np.ndarray:
        t, x, v = point.t, point.x, point.v
        K = self.bundle.total.at(t, x)
        return (K[0, :, 0]
                + 2.0 * np.einsum("hj,j->h", K[0, :, 1:], v)
                + np.einsum("ihj,i,j->h", K[1:, :, 1:], v, v))

    def lifted(self, point: PhasePoint) -> np.ndarray:
        """The full vector (1, v, gamma) at the point."""
        return np.concatenate(([1.0], point.v, self.accel(point)))

    def contraction_residual(self, omega: CosymplecticForm, point: PhasePoint):
        return float(np.max(np.abs(omega.matrix(point) @ self.lifted(point))))


def build_gamma(bundle: GeometryBundle) -> SecondOrderConnection:
    bundle.metric.check_positive_definite(0.0, np.array(
        [0.5 * (lo + hi) for lo, hi in bundle.chart.extents]))
    return SecondOrderConnection(bundle)


def integrate_newton(gamma: SecondOrderConnection, start: PhasePoint,
                     t_end: float, steps: int):
    """RK4 integration of dx/dt = v, dv/dt = gamma(t, x, v).

    Returns the trajectory as a list of PhasePoints; raises
    ChartBoundaryError with the exit time if the motion leaves the chart.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    n = gamma.n
    chart = gamma.bundle.chart

    def rhs(t, y):
        p = PhasePoint(t, y[:n], y[n:])
        return np.concatenate((p.v, gamma.accel(p)))

    h = (t_end - start.t) / steps
    t = start.t
    y = np.concatenate((start.x, start.v))
    out = [start]
    for _ in range(steps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        if not chart.contains(y[:n]):
            raise ChartBoundaryError(f"trajectory left the chart at t={t}", t_exit=t)
        out.append(PhasePoint(t, y[:n].copy(), y[n:].copy()))
    return out


@dataclass
class PoincareCartanSplit:
    """Observed Lagrangian, Hamiltonian and momentum for the chart gauge A."""

    lagrangian: callable
    hamiltonian: callable
    momentum: callable


def poincare_cartan_split(bundle: GeometryBundle) -> PoincareCartanSplit:
    A = bundle.potential

    def _parts(point):
        G = bundle.metric.at(point.t, point.x)
        Av = eval_field_array(A, point.t, point.x)
        kin = 0.5 * point.v @ G @ point.v
        return G, Av, kin

    def lagrangian(point):
        G, Av, kin = _parts(point)
        return kin + Av[1:] @ point.v + Av[0]

    def hamiltonian(point):
        _, Av, kin = _parts(point)
        return kin - Av[0]

    def momentum(point):
        G, Av, _ = _parts(point)
        return G @ point.v + Av[1:]

    return PoincareCartanSplit(lagrangian, hamiltonian, momentum)


def hamiltonian_lift(omega: CosymplecticForm, grad, point: PhasePoint,
                     rtol=1e-10):
    """Vertical Hamiltonian lift H[f]: time component zero, i_H Omega = df
    with the dt-part of df removed along the kernel direction."""
    n = omega.n
    M = omega.matrix(point)
    df = np.asarray(grad, dtype=float)
    khat = omega.kernel_direction(point, rtol)
    rhs = df.copy()
    rhs[0] -= df @ khat
    # i_u Omega has components -(M u); unknowns are along (dx^i, dx^i_0)
    rhs = -rhs
    A = M[:, 1:]
    sol, res, rank, sv = np.linalg.lstsq(A, rhs, rcond=rtol)
    if rank < 2 * n:
        raise DegeneracyError(f"cosymplectic form degenerate at {point}")
    resid = np.max(np.abs(A @ sol - rhs))
    if resid > 1e-8 * max(1.0, np.max(np.abs(df))):
        raise DegeneracyError(f"Hamiltonian lift inconsistent at {point}")
    return np.concatenate(([0.0], sol))


def _numeric_gradient(f, point, step=1e-6):
    c0 = point.coords()
    n = point.n
    g = np.empty(c0.size)
    for a in range(c0.size):
        cp, cm = c0.copy(), c0.copy()
        cp[a] += step
        cm[a] -= step
        pp = _point_from_coords(cp, n)
        pm = _point_from_coords(cm, n)
        g[a] = (f(pp.t, pp.x, pp.v) - f(pm.t, pm.x, pm.v)) / (2 * step)
    return g


def poisson_bracket(f, g, omega: CosymplecticForm, at: PhasePoint,
                    grad_f=None, grad_g=None) -> float:
    """Poisson bracket {f, g} at a phase point.

    f, g are callables (t, x, v) -> real; analytic gradients (length 2n+1,
    ordered t, x, v) may be supplied to skip the finite differencing.
    """
    df = np.asarray(grad_f(at) if grad_f is not None else _numeric_gradient(f, at))
    dg = np.asarray(grad_g(at) if grad_g is not None else _numeric_gradient(g, at))
    Hf = hamiltonian_lift(omega, df, at)
    return float(dg @ Hf)
