"""Dimension-tagged scalars over the unit spaces of time, length and mass.

Exponents are exact rationals so that half-integer tags (charge) are
representable without round-off.  All downstream modules work with raw
chart numbers; tags are checked once, when a scenario is loaded.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, DomainError


def _frac(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


@dataclass(frozen=True)
class DimTag:
    """Exponents of the three unit spaces (time, length, mass)."""

    t_exp: Fraction = Fraction(0)
    l_exp: Fraction = Fraction(0)
    m_exp: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "t_exp", _frac(self.t_exp))
        object.__setattr__(self, "l_exp", _frac(self.l_exp))
        object.__setattr__(self, "m_exp", _frac(self.m_exp))

    def __mul__(self, other: "DimTag") -> "DimTag":
        return DimTag(self.t_exp + other.t_exp,
                      self.l_exp + other.l_exp,
                      self.m_exp + other.m_exp)

    def inverse(self) -> "DimTag":
        return DimTag(-self.t_exp, -self.l_exp, -self.m_exp)

    def __truediv__(self, other: "DimTag") -> "DimTag":
        return self * other.inverse()

    @property
    def is_dimensionless(self) -> bool:
        return self == DIMENSIONLESS

    def __str__(self):
        return f"T^{self.t_exp} L^{self.l_exp} M^{self.m_exp}"


DIMENSIONLESS = DimTag()
TIME = DimTag(1, 0, 0)
LENGTH = DimTag(0, 1, 0)
MASS = DimTag(0, 0, 1)
# hbar lives in T* L^2 M, charge in T* L^(3/2) M^(1/2)
PLANCK_TAG = DimTag(-1, 2, 1)
CHARGE_TAG = DimTag(-1, Fraction(3, 2), Fraction(1, 2))
METRIC_TAG = DimTag(0, 2, 0)
EM_TAG = DimTag(0, Fraction(1, 2), Fraction(1, 2))


@dataclass(frozen=True)
class ScaledScalar:
    """A real number carrying a unit tag."""

    value: float
    tag: DimTag = DIMENSIONLESS

    def __add__(self, other: "ScaledScalar") -> "ScaledScalar":
        if self.tag != other.tag:
            raise DimensionError(f"cannot add {self.tag} to {other.tag}")
        return ScaledScalar(self.value + other.value, self.tag)

    def __sub__(self, other: "ScaledScalar") -> "ScaledScalar":
        if self.tag != other.tag:
            raise DimensionError(f"cannot subtract {other.tag} from {self.tag}")
        return ScaledScalar(self.value - other.value, self.tag)

    def __mul__(self, other: "ScaledScalar") -> "ScaledScalar":
        return ScaledScalar(self.value * other.value, self.tag * other.tag)

    def __truediv__(self, other: "ScaledScalar") -> "ScaledScalar":
        return ScaledScalar(self.value / other.value, self.tag / other.tag)


def planck(value: float = 1.0) -> ScaledScalar:
    return ScaledScalar(value, PLANCK_TAG)


def mass(value: float = 1.0) -> ScaledScalar:
    return ScaledScalar(value, MASS)


def charge(value: float = 1.0) -> ScaledScalar:
    return ScaledScalar(value, CHARGE_TAG)


def _scale(data, factor: float):
    if isinstance(data, np.ndarray):
        return factor * data
    if isinstance(data, (list, tuple)):
        return type(data)(_scale(item, factor) for item in data)
    # scalar fields and plain numbers both support left multiplication
    return factor * data


def rescale_metric(g, m: ScaledScalar, hbar: ScaledScalar, g_tag: DimTag = METRIC_TAG):
    """Rescale a spacelike metric g -> G = (m/hbar) g.

    ``g`` may be a plain array of components or any nested structure of
    objects supporting scalar multiplication.  Returns ``(G, tag)`` with the
    resulting tag; for the standard input tags the result carries the time
    tag.
    """
    if m.tag != MASS:
        raise DimensionError(f"mass must carry tag {MASS}, got {m.tag}")
    if hbar.tag != PLANCK_TAG:
        raise DimensionError(f"Planck constant must carry tag {PLANCK_TAG}, got {hbar.tag}")
    if m.value <= 0 or hbar.value <= 0:
        raise DomainError("mass and Planck constant must be positive")
    tag = MASS * hbar.tag.inverse() * g_tag
    return _scale(g, m.value / hbar.value), tag


def rescale_em(f_em, q: ScaledScalar, hbar: ScaledScalar, f_tag: DimTag = EM_TAG):
    """Rescale an electromagnetic 2-form f -> F = (q/hbar) f.

    Returns ``(F, tag)``; for the standard input tags F is dimensionless.
    """
    if q.tag != CHARGE_TAG:
        raise DimensionError(f"charge must carry tag {CHARGE_TAG}, got {q.tag}")
    if hbar.tag != PLANCK_TAG:
        raise DimensionError(f"Planck constant must carry tag {PLANCK_TAG}, got {hbar.tag}")
    if hbar.value <= 0:
        raise DomainError("Planck constant must be positive")
    tag = q.tag * hbar.tag.inverse() * f_tag
    return _scale(f_em, q.value / hbar.value), tag
