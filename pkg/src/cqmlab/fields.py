"""Chart-local scalar fields of (t, x1..xn).

Fields are either backed by a sympy expression (scenario input) or by a
plain callable (derived quantities such as bracket coefficients).
Expression-backed fields differentiate symbolically; callable-backed
fields fall back to small-step central differences.
"""
from __future__ import annotations

import numbers

import numpy as np
import sympy as sp

from .errors import ExpressionError

_FD_STEP = 1e-5

_ALLOWED_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "sqrt": sp.sqrt}


def chart_symbols(n):
    """Symbols (t, x1..xn) of an n-dimensional fibred chart."""
    return (sp.Symbol("t", real=True),) + tuple(
        sp.Symbol(f"x{i}", real=True) for i in range(1, n + 1))


def parse_expression(text, n):
    """Parse a scenario expression string into a sympy expression.

    Grammar: +, -, *, /, ^, parentheses, sin, cos, exp, sqrt, pi, numeric
    literals and the chart variables t, x1..xn.
    """
    syms = chart_symbols(n)
    namespace = {s.name: s for s in syms}
    namespace.update(_ALLOWED_FUNCS)
    namespace["pi"] = sp.pi
    try:
        expr = sp.sympify(str(text).replace("^", "**"), locals=namespace)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from None
    extra = expr.free_symbols - set(syms)
    if extra:
        raise ExpressionError(
            f"unknown symbols {sorted(str(s) for s in extra)} in {text!r}")
    return expr


class ScalarField:
    """A real scalar field on the chart, evaluable pointwise or on grids."""

    __slots__ = ("n", "expr", "_func")

    def __init__(self, func, n, expr=None):
        self._func = func
        self.n = n
        self.expr = expr

    # -- constructors -------------------------------------------------

    @classmethod
    def from_expression(cls, source, n):
        expr = source if isinstance(source, sp.Expr) else parse_expression(source, n)
        func = sp.lambdify(chart_symbols(n), expr, modules="numpy")
        return cls(func, n, expr=expr)

    @classmethod
    def constant(cls, value, n):
        return cls.from_expression(sp.sympify(value), n)

    @classmethod
    def zero(cls, n):
        return cls.constant(0, n)

    @classmethod
    def from_callable(cls, func, n, pointwise=False):
        """Wrap a callable func(t, x1..xn).

        With ``pointwise=True`` the callable accepts only scalars and is
        vectorized over array arguments.
        """
        if pointwise:
            func = np.vectorize(func, otypes=[float])
        return cls(func, n)

    # -- evaluation ---------------------------------------------------

    def __call__(self, t, xs):
        xs = tuple(xs)
        if len(xs) != self.n:
            raise ValueError(f"expected {self.n} spatial arguments, got {len(xs)}")
        out = self._func(t, *xs)
        shape = np.broadcast_shapes(np.shape(t), *(np.shape(x) for x in xs))
        out = np.asarray(out, dtype=float)
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        if shape == ():
            return float(out)
        return out

    @property
    def symbolic(self):
        return self.expr is not None

    # -- calculus and algebra -----------------------------------------

    def diff(self, axis):
        """Derivative field along axis 0 (time) or 1..n (space)."""
        if not 0 <= axis <= self.n:
            raise ValueError(f"axis {axis} out of range for n={self.n}")
        if self.symbolic:
            return ScalarField.from_expression(
                sp.diff(self.expr, chart_symbols(self.n)[axis]), self.n)
        base, h, n = self._func, _FD_STEP, self.n

        if axis == 0:
            def func(t, *xs):
                return (base(t + h, *xs) - base(t - h, *xs)) / (2.0 * h)
        else:
            j = axis - 1

            def func(t, *xs):
                up = list(xs)
                dn = list(xs)
                up[j] = np.asarray(xs[j]) + h
                dn[j] = np.asarray(xs[j]) - h
                return (base(t, *up) - base(t, *dn)) / (2.0 * h)
        return ScalarField(func, n)

    def _binary(self, other, sym_op, num_op):
        other = as_field(other, self.n)
        if self.symbolic and other.symbolic:
            return ScalarField.from_expression(sym_op(self.expr, other.expr), self.n)
        a, b = self._func, other._func
        return ScalarField(lambda t, *xs: num_op(a(t, *xs), b(t, *xs)), self.n)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b, lambda a, b: a - b)

    def __rsub__(self, other):
        return as_field(other, self.n) - self

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: a / b, lambda a, b: a / b)

    def __neg__(self):
        if self.symbolic:
            return ScalarField.from_expression(-self.expr, self.n)
        base = self._func
        return ScalarField(lambda t, *xs: -np.asarray(base(t, *xs)), self.n)

    def is_zero(self):
        """True when the field is the symbolic zero.  Conservative for callables."""
        return self.symbolic and self.expr == 0


def as_field(source, n):
    """Coerce a string, number, sympy expression or callable to a ScalarField."""
    if isinstance(source, ScalarField):
        if source.n != n:
            raise ValueError(f"field has n={source.n}, expected n={n}")
        return source
    if isinstance(source, (str, sp.Expr)):
        return ScalarField.from_expression(source, n)
    if isinstance(source, numbers.Number):
        return ScalarField.constant(source, n)
    if callable(source):
        return ScalarField.from_callable(source, n)
    raise TypeError(f"cannot interpret {source!r} as a scalar field")


def field_array(sources, n, shape=None):
    """Build an object ndarray of ScalarFields from nested sources."""
    nested = np.asarray(sources, dtype=object)
    if shape is not None:
        nested = nested.reshape(shape)
    arr = np.empty(nested.shape, dtype=object)
    for idx in np.ndindex(*nested.shape):
        arr[idx] = as_field(nested[idx], n)
    return arr


def zero_field_array(shape, n):
    arr = np.empty(shape, dtype=object)
    z = ScalarField.zero(n)
    arr[...] = z
    return arr


def eval_field_array(fields, t, xs):
    """Evaluate an object array of fields; component axes lead the result."""
    flat = [f(t, xs) for f in fields.ravel()]
    sample = np.asarray(flat[0])
    out = np.empty(fields.shape + sample.shape, dtype=float)
    for idx, val in zip(np.ndindex(*fields.shape), flat):
        out[idx] = val
    return out


def all_symbolic(fields):
    return all(f.symbolic for f in np.asarray(fields, dtype=object).ravel())
