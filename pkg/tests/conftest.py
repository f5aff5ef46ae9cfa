"""Shared fixtures: deterministic random admissible bundles and functions."""
import numpy as np
import pytest

from cqmlab.falg import SpecialQuadratic
from cqmlab.fields import field_array
from cqmlab.geometry import (FibredChart, GeometryBundle, SpacelikeMetric,
                             bundle_from_potential, levi_civita_connection)


def _poly(rng, syms, degree=2, scale=0.1):
    """A small random polynomial expression string in the given symbols."""
    terms = ["%.6f" % rng.uniform(-scale, scale)]
    for s in syms:
        terms.append("%.6f*%s" % (rng.uniform(-scale, scale), s))
    if degree >= 2:
        for i, a in enumerate(syms):
            for b in syms[i:]:
                terms.append("%.6f*%s*%s" % (rng.uniform(-scale, scale), a, b))
    return " + ".join(terms)


def random_bundle(rng, n=2, curved=True, with_em=True, time_dependent=False):
    """A random admissible bundle: symbolic SPD metric near the identity,
    potential from small random polynomials, Levi-Civita gravity, F = dA."""
    xs = [f"x{i}" for i in range(1, n + 1)]
    syms = (["t"] if time_dependent else []) + xs
    comp = [["0"] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            base = "1 + " if i == j else ""
            p = _poly(rng, syms, scale=0.05 if curved else 0.0)
            comp[i][j] = comp[j][i] = base + "(" + p + ")" if curved or i == j \
                else "0"
    if not curved:
        comp = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    metric = SpacelikeMetric(field_array(comp, n, shape=(n, n)))
    potential = [_poly(rng, syms, scale=0.3) if with_em else "0"
                 for _ in range(n + 1)]
    chart = FibredChart(n, [(-1.0, 1.0)] * n, (16,) * n)
    return bundle_from_potential(chart, metric=metric, potential=potential)


def random_quantisable(rng, n, allow_time=True):
    """A random quantisable special quadratic: f0 a function of t only."""
    xs = [f"x{i}" for i in range(1, n + 1)]
    f0 = "%.6f + %.6f*t" % (rng.uniform(-1, 1),
                            rng.uniform(-0.5, 0.5) if allow_time else 0.0)
    fi = [_poly(rng, xs, scale=0.5) for _ in range(n)]
    base = _poly(rng, xs, scale=0.5)
    return SpecialQuadratic.build(f0, fi, base, n)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def flat1d():
    chart = FibredChart(1, [(-16.0, 16.0)], 1024)
    return bundle_from_potential(chart, potential=["0", "0"])


@pytest.fixture(scope="session")
def harmonic1d():
    chart = FibredChart(1, [(-10.0, 10.0)], 1024)
    return bundle_from_potential(chart, potential=["-x1^2/2", "0"])


@pytest.fixture(scope="session")
def sphere2d():
    conf = "4/(1 + x1^2 + x2^2)^2"
    metric = SpacelikeMetric(field_array([[conf, "0"], ["0", conf]], 2))
    chart = FibredChart(2, [(-0.9, 0.9), (-0.9, 0.9)], (64, 64))
    return bundle_from_potential(chart, metric=metric,
                                 potential=["0", "0", "0"])
