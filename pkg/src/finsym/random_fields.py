"""Seeded random polynomial fields and sections for property checks."""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .jets import Jet, JetSpace, coordinate_jets
from .lifts import BaseVectorField, Section, TMVectorField, complete_lift, vertical_lift


def _monomials(num_vars: int, degree: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    for d in range(degree + 1):
        out.extend(combinations_with_replacement(range(num_vars), d))
    return out


@lru_cache(maxsize=512)
def _monomial_stack(values_: tuple[float, ...], order: int, degree: int, num_free: int) -> tuple[JetSpace, np.ndarray]:
    """Coefficient arrays of every monomial in the first ``num_free`` coordinates, stacked."""
    zs = coordinate_jets(values_, order)
    rows = []
    for mono in _monomials(num_free, degree):
        j = Jet.constant(1.0, order, len(values_))
        for v in mono:
            j = j * zs[v]
        rows.append(j.coeffs)
    return zs[0].space, np.array(rows)


def _poly_jets(C: np.ndarray, p, order: int, degree: int, num_free: int) -> list[Jet]:
    sp, M = _monomial_stack(p.x + p.y, order, degree, num_free)
    return [Jet(sp, row) for row in C @ M]


def random_base_field(rng: np.random.Generator, n: int, degree: int = 2, scale: float = 0.5, name: str = "Y") -> BaseVectorField:
    """A field whose components are random polynomials of the given degree in x."""
    C = rng.uniform(-scale, scale, size=(n, len(_monomials(n, degree))))
    return BaseVectorField(n, expand=lambda p, k: _poly_jets(C, p, k, degree, n), name=name)


def random_section(rng: np.random.Generator, n: int, degree: int = 2, scale: float = 0.5, name: str = "s") -> Section:
    """A section whose principal part is a random polynomial in (x, y)."""
    C = rng.uniform(-scale, scale, size=(n, len(_monomials(2 * n, degree))))
    return Section(n, lambda p, k: _poly_jets(C, p, k, degree, 2 * n), name=name)


def random_tm_field(rng: np.random.Generator, n: int, degree: int = 2, scale: float = 0.5, name: str = "xi") -> TMVectorField:
    """A generally non-projectable field on TM with polynomial components."""
    C = rng.uniform(-scale, scale, size=(2 * n, len(_monomials(2 * n, degree))))
    return TMVectorField(n, lambda p, k: _poly_jets(C, p, k, degree, 2 * n), name=name)


def random_projectable(rng: np.random.Generator, n: int, name: str = "xi") -> TMVectorField:
    """X^c + Y^v for random quadratic X, Y."""
    X = random_base_field(rng, n, name=f"{name}X")
    Y = random_base_field(rng, n, name=f"{name}Y")
    f = complete_lift(X) + vertical_lift(Y)
    f.name = name
    return f
