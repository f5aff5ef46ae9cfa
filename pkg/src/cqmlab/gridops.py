"""Spatial grids and sparse difference operators.

Grids hold the pure interior nodes of a chart box (homogeneous Dirichlet
boundary): along an axis with extent (lo, hi) and N points the nodes are
lo + (i+1) h with h = (hi - lo)/(N+1).

The difference matrices here are the raw building blocks; the physically
weighted operators (covariant Laplacian and friends) are assembled in
:mod:`cqmlab.quantum`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .errors import DomainError, StencilError


@dataclass(frozen=True)
class SpatialGrid:
    """Tensor-product interior grid of a fibred chart."""

    axes: tuple          # n arrays of node coordinates
    steps: tuple         # n spacings
    extents: tuple

    @classmethod
    def from_chart(cls, chart):
        axes, steps = [], []
        for (lo, hi), N in zip(chart.extents, chart.grid_points):
            h = (hi - lo) / (N + 1)
            axes.append(lo + h * np.arange(1, N + 1))
            steps.append(h)
        return cls(tuple(axes), tuple(steps), tuple(chart.extents))

    @property
    def n(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def coords(self, offset_axis=None, offset=0.0):
        """Flat coordinate arrays (x1..xn) over all nodes, optionally with
        one axis shifted by a constant (for staggered midpoints)."""
        axes = list(self.axes)
        if offset_axis is not None:
            axes[offset_axis] = axes[offset_axis] + offset
        meshes = np.meshgrid(*axes, indexing="ij")
        return [m.ravel() for m in meshes]

    def eval_field(self, field, t, offset_axis=None, offset=0.0):
        """Evaluate a ScalarField on all nodes as a flat array."""
        return np.atleast_1d(np.asarray(
            field(t, self.coords(offset_axis, offset)), dtype=float))

    def cell_volume(self):
        return float(np.prod(self.steps))


def identity(grid: SpatialGrid):
    return sparse.identity(grid.size, format="csr")


def shift(grid: SpatialGrid, axis: int, direction: int):
    """Shift matrix along an axis: (S psi)_i = psi_{i+direction}, with the
    homogeneous Dirichlet value 0 used beyond the ends."""
    if not 0 <= axis < grid.n:
        raise DomainError(f"axis {axis} out of range")
    if direction not in (1, -1):
        raise StencilError("shift direction must be +1 or -1")
    N = grid.shape[axis]
    one = sparse.diags([np.ones(N - 1)], [direction], shape=(N, N))
    mats = [sparse.identity(m, format="csr") for m in grid.shape]
    mats[axis] = one
    out = mats[0]
    for m in mats[1:]:
        out = sparse.kron(out, m, format="csr")
    return out.tocsr()


def central_diff(grid: SpatialGrid, axis: int):
    """Central first derivative; exactly antisymmetric on the interior grid."""
    h = grid.steps[axis]
    return ((shift(grid, axis, +1) - shift(grid, axis, -1)) / (2.0 * h)).tocsr()


def diag(values):
    return sparse.diags([np.asarray(values)], [0], format="csr")


def flux_second_diff(grid: SpatialGrid, axis: int, c_minus, c_plus):
    """Conservative second difference along one axis with midpoint
    coefficients: (L psi)_i = c_{i+1/2}(psi_{i+1}-psi_i) - c_{i-1/2}(psi_i-psi_{i-1}),
    divided by h^2.  Symmetric whenever the midpoint values are shared."""
    h = grid.steps[axis]
    Sp = shift(grid, axis, +1)
    Sm = shift(grid, axis, -1)
    cp = diag(np.asarray(c_plus))
    cm = diag(np.asarray(c_minus))
    return ((cp @ (Sp - identity(grid)) - cm @ (identity(grid) - Sm)) / h ** 2).tocsr()


def hermiticity_defect(matrix, weight):
    """Max |W H - (W H)^dagger| entry, W = diag(weight): the defect of
    Hermiticity with respect to the weighted inner product."""
    WH = diag(weight) @ matrix
    d = WH - WH.conjugate().transpose()
    return 0.0 if d.nnz == 0 else float(np.max(np.abs(d.data)))
