"""Truncated multivariate Taylor arithmetic (jets) up to order 4.

A :class:`Jet` stores the Taylor coefficients ``c[alpha] = d^alpha f / alpha!``
of a scalar quantity at an expansion point, for every multi-index ``alpha`` of
total degree at most ``order``.

Multi-index enumeration is graded lexicographic and frozen: indices are sorted
by total degree, and within one degree lexicographically with higher powers of
earlier variables first.  For two variables and order 2 the layout is::

    1, z0, z1, z0^2, z0*z1, z1^2

Since the enumeration is graded, truncating a jet to a lower order is a prefix
slice of its coefficient array.  Jets of different orders combine by truncating
to the smaller order, and :meth:`Jet.deriv` lowers the order by one, so every
value stays exact at the order it carries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement, product
from typing import Callable, Sequence, Union

import numpy as np

MAX_ORDER = 4

Number = Union[int, float]


class JetError(ValueError):
    """Invalid jet construction or usage."""


class JetDomainError(JetError):
    """An elementary function was evaluated outside its smooth domain.

    ``point`` is attached by callers that know the expansion point; it is the
    offending coordinate tuple (or None when unknown).
    """

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.message = message
        self.point = point

    def with_point(self, point) -> "JetDomainError":
        err = type(self)(self.message, point=tuple(float(v) for v in point))
        return err

    def __str__(self) -> str:
        if self.point is None:
            return self.message
        pt = ", ".join(f"{v:.6g}" for v in self.point)
        return f"{self.message} at point ({pt})"


class SingularMatrixError(JetDomainError):
    """The constant-term matrix of a jet linear system is singular."""


def _multi_indices(num_vars: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for degree in range(order + 1):
        block = []
        for combo in combinations_with_replacement(range(num_vars), degree):
            alpha = [0] * num_vars
            for i in combo:
                alpha[i] += 1
            block.append(tuple(alpha))
        block.sort(key=lambda a: tuple(-v for v in a))
        out.extend(block)
    return out


class JetSpace:
    """Index tables shared by all jets with the same (num_vars, order)."""

    def __init__(self, num_vars: int, order: int):
        if num_vars < 1:
            raise JetError(f"num_vars must be >= 1, got {num_vars}")
        if not 0 <= order <= MAX_ORDER:
            raise JetError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
        self.num_vars = num_vars
        self.order = order
        self.indices = tuple(_multi_indices(num_vars, order))
        self.size = len(self.indices)
        self.position = {alpha: k for k, alpha in enumerate(self.indices)}
        self.degrees = np.array([sum(a) for a in self.indices])
        self.factorials = np.array(
            [math.prod(math.factorial(v) for v in a) for a in self.indices], dtype=float
        )

        left, right, starts = [], [], []
        for gamma in self.indices:
            starts.append(len(left))
            for alpha in product(*(range(v + 1) for v in gamma)):
                beta = tuple(g - a for g, a in zip(gamma, alpha))
                left.append(self.position[alpha])
                right.append(self.position[beta])
        self._mul_left = np.array(left, dtype=np.intp)
        self._mul_right = np.array(right, dtype=np.intp)
        self._mul_starts = np.array(starts, dtype=np.intp)
        self._deriv_tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __repr__(self) -> str:
        return f"JetSpace(num_vars={self.num_vars}, order={self.order})"

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        terms = a[self._mul_left] * b[self._mul_right]
        return np.add.reduceat(terms, self._mul_starts)

    def deriv_table(self, var: int) -> tuple[np.ndarray, np.ndarray]:
        """Source positions and factors producing d/dz_var in the order-1 space."""
        table = self._deriv_tables.get(var)
        if table is None:
            lower = space(self.num_vars, self.order - 1)
            src = np.empty(lower.size, dtype=np.intp)
            fac = np.empty(lower.size)
            for k, beta in enumerate(lower.indices):
                raised = list(beta)
                raised[var] += 1
                src[k] = self.position[tuple(raised)]
                fac[k] = raised[var]
            table = (src, fac)
            self._deriv_tables[var] = table
        return table


@lru_cache(maxsize=None)
def space(num_vars: int, order: int) -> JetSpace:
    return JetSpace(num_vars, order)


def num_coefficients(num_vars: int, order: int) -> int:
    return math.comb(num_vars + order, order)


class Jet:
    """Truncated Taylor expansion of a scalar in ``num_vars`` variables.

    Jets are immutable; arithmetic returns new jets.  Plain numbers act as
    constant jets.
    """

    __slots__ = ("space", "coeffs")

    def __init__(self, jet_space: JetSpace, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (jet_space.size,):
            raise JetError(
                f"coefficient array has shape {coeffs.shape}, expected ({jet_space.size},)"
            )
        coeffs.setflags(write=False)
        self.space = jet_space
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value: Number, order: int, num_vars: int) -> "Jet":
        sp = space(num_vars, order)
        c = np.zeros(sp.size)
        c[0] = value
        return cls(sp, c)

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, num_vars={self.num_vars}, value={self.value:.6g})"

    def is_zero(self) -> bool:
        return not self.coeffs.any()

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise JetError(f"cannot raise jet order from {self.order} to {order}")
        sp = space(self.num_vars, order)
        return Jet(sp, self.coeffs[: sp.size].copy())

    def deriv(self, var: int) -> "Jet":
        """Exact partial derivative d/dz_var; the result has order - 1."""
        if not 0 <= var < self.num_vars:
            raise JetError(f"variable index {var} out of range for {self.num_vars} variables")
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        src, fac = self.space.deriv_table(var)
        return Jet(space(self.num_vars, self.order - 1), self.coeffs[src] * fac)

    def gradient(self) -> np.ndarray:
        """First partials at the expansion point."""
        if self.order == 0:
            raise JetError("order-0 jet carries no derivatives")
        return np.array(self.coeffs[1 : 1 + self.num_vars])

    def partial(self, multi_index: Sequence[int]) -> float:
        return partial(self, multi_index)

    def _coerce(self, other) -> tuple["Jet", "Jet"]:
        if isinstance(other, Jet):
            if other.num_vars != self.num_vars:
                raise JetError(
                    f"jets over {self.num_vars} and {other.num_vars} variables do not mix"
                )
            k = min(self.order, other.order)
            return self.truncate(k), other.truncate(k)
        return self, Jet.constant(float(other), self.order, self.num_vars)

    def __add__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            c = self.coeffs.copy()
            c[0] += other
            return Jet(self.space, c)
        a, b = self._coerce(other)
        return Jet(a.space, a.coeffs + b.coeffs)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            c = self.coeffs.copy()
            c[0] -= other
            return Jet(self.space, c)
        a, b = self._coerce(other)
        return Jet(a.space, a.coeffs - b.coeffs)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __neg__(self) -> "Jet":
        return Jet(self.space, -self.coeffs)

    def __pos__(self) -> "Jet":
        return self

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.space, self.coeffs * other)
        a, b = self._coerce(other)
        return Jet(a.space, a.space.multiply(a.coeffs, b.coeffs))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            if other == 0:
                raise JetDomainError("division by zero")
            return Jet(self.space, self.coeffs / other)
        return self * reciprocal(other)

    def __rtruediv__(self, other) -> "Jet":
        return reciprocal(self) * other

    def __pow__(self, exponent: int) -> "Jet":
        return pow_int(self, exponent)


JetLike = Union[Jet, Number]


def as_jet(value: JetLike, like: Jet) -> Jet:
    """Promote a number to a constant jet in the space of ``like``."""
    if isinstance(value, Jet):
        return value
    return Jet.constant(float(value), like.order, like.num_vars)


def jet_variable(index: int, value: float, order: int, num_vars: int) -> Jet:
    """The coordinate function z_index expanded at a point where it equals ``value``."""
    if not 0 <= index < num_vars:
        raise JetError(f"variable index {index} out of range for {num_vars} variables")
    sp = space(num_vars, order)
    c = np.zeros(sp.size)
    c[0] = value
    if order >= 1:
        c[1 + index] = 1.0
    return Jet(sp, c)


def jet_constant(value: float, order: int, num_vars: int) -> Jet:
    return Jet.constant(value, order, num_vars)


def partial(j: Jet, multi_index: Sequence[int]) -> float:
    """Mixed partial derivative d^alpha j at the expansion point."""
    alpha = tuple(int(v) for v in multi_index)
    if len(alpha) != j.num_vars:
        raise JetError(f"multi-index has {len(alpha)} entries, jet has {j.num_vars} variables")
    if any(v < 0 for v in alpha):
        raise JetError(f"negative multi-index {alpha}")
    if sum(alpha) > j.order:
        raise JetError(f"derivative degree {sum(alpha)} exceeds jet order {j.order}")
    k = j.space.position[alpha]
    return float(j.coeffs[k] * j.space.factorials[k])


# -- elementary functions ------------------------------------------------------


def _compose(a: Jet, series: Sequence[float]) -> Jet:
    """f(a) given series[k] = f^(k)(a0) / k!."""
    nil = a.coeffs.copy()
    nil[0] = 0.0
    out = np.zeros(a.space.size)
    out[0] = series[0]
    if a.order == 0:
        return Jet(a.space, out)
    power = nil
    for k in range(1, a.order + 1):
        out += series[k] * power
        if k < a.order:
            power = a.space.multiply(power, nil)
    return Jet(a.space, out)


def reciprocal(a: JetLike) -> Jet:
    if not isinstance(a, Jet):
        raise JetError("reciprocal expects a Jet")
    a0 = a.value
    if a0 == 0.0:
        raise JetDomainError("division by a jet with zero constant term")
    series = [(-1.0) ** k / a0 ** (k + 1) for k in range(a.order + 1)]
    return _compose(a, series)


def sqrt(a: Jet) -> Jet:
    a0 = a.value
    if not a0 > 0.0:
        raise JetDomainError(f"sqrt of nonpositive value {a0:.6g}")
    series = []
    coef = 1.0
    for k in range(a.order + 1):
        series.append(coef * a0 ** (0.5 - k))
        coef *= (0.5 - k) / (k + 1)
    return _compose(a, series)


def exp(a: Jet) -> Jet:
    e = math.exp(a.value)
    return _compose(a, [e / math.factorial(k) for k in range(a.order + 1)])


def log(a: Jet) -> Jet:
    a0 = a.value
    if not a0 > 0.0:
        raise JetDomainError(f"log of nonpositive value {a0:.6g}")
    series = [math.log(a0)] + [
        (-1.0) ** (k + 1) / (k * a0**k) for k in range(1, a.order + 1)
    ]
    return _compose(a, series)


def sin(a: Jet) -> Jet:
    s, c = math.sin(a.value), math.cos(a.value)
    cycle = (s, c, -s, -c)
    return _compose(a, [cycle[k % 4] / math.factorial(k) for k in range(a.order + 1)])


def cos(a: Jet) -> Jet:
    s, c = math.sin(a.value), math.cos(a.value)
    cycle = (c, -s, -c, s)
    return _compose(a, [cycle[k % 4] / math.factorial(k) for k in range(a.order + 1)])


def pow_int(a: Jet, exponent: int) -> Jet:
    if isinstance(exponent, float) and exponent.is_integer():
        exponent = int(exponent)
    if not isinstance(exponent, (int, np.integer)):
        raise JetError(f"pow_int needs an integer exponent, got {exponent!r}")
    exponent = int(exponent)
    if exponent < 0:
        return pow_int(reciprocal(a), -exponent)
    result = Jet.constant(1.0, a.order, a.num_vars)
    base = a
    while exponent:
        if exponent & 1:
            result = result * base
        exponent >>= 1
        if exponent:
            base = base * base
    return result


_UNARY = {"neg": lambda a: -a, "sqrt": sqrt, "sin": sin, "cos": cos, "exp": exp, "log": log}
_BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}


def jet_elementary(op: str, *args):
    """Dispatch an elementary operation by name (``pow_int`` takes an int second argument)."""
    if op in _UNARY:
        if len(args) != 1:
            raise JetError(f"{op} takes one argument")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise JetError(f"{op} takes two arguments")
        return _BINARY[op](*args)
    if op == "pow_int":
        return pow_int(*args)
    raise JetError(f"unknown elementary operation {op!r}")


# -- points --------------------------------------------------------------------


@dataclass(frozen=True)
class JetPoint:
    """Expansion point with a kind tag per variable ('x' base, 'y' fibre)."""

    values: tuple[float, ...]
    var_kinds: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        kinds = tuple(self.var_kinds) or ("z",) * len(self.values)
        if len(kinds) != len(self.values):
            raise JetError("var_kinds must tag every variable")
        object.__setattr__(self, "var_kinds", kinds)

    @classmethod
    def tangent(cls, x: Sequence[float], y: Sequence[float]) -> "JetPoint":
        if len(x) != len(y):
            raise JetError("x and y must have the same length")
        return cls(tuple(x) + tuple(y), ("x",) * len(x) + ("y",) * len(y))

    @property
    def num_vars(self) -> int:
        return len(self.values)

    def variables(self, order: int) -> tuple[Jet, ...]:
        return coordinate_jets(self.values, order)


@lru_cache(maxsize=4096)
def coordinate_jets(values: tuple[float, ...], order: int) -> tuple[Jet, ...]:
    m = len(values)
    return tuple(jet_variable(i, v, order, m) for i, v in enumerate(values))


# -- linear algebra over jets ---------------------------------------------------


def _eliminate(A: Sequence[Sequence[JetLike]], rhs: list[Jet] | None):
    n = len(A)
    if any(len(row) != n for row in A):
        raise JetError("matrix must be square")
    template = next((e for row in A for e in row if isinstance(e, Jet)), None)
    if template is None and rhs:
        template = next((e for e in rhs if isinstance(e, Jet)), None)
    if template is None:
        raise JetError("at least one entry must be a Jet")
    M = [[as_jet(e, template) for e in row] for row in A]
    scale = max((abs(e.value) for row in M for e in row), default=0.0)
    sign = 1.0
    pivots = []
    for k in range(n):
        p = max(range(k, n), key=lambda r: abs(M[r][k].value))
        if abs(M[p][k].value) <= 1e-14 * scale or scale == 0.0:
            raise SingularMatrixError("singular constant-term matrix")
        if p != k:
            M[k], M[p] = M[p], M[k]
            if rhs is not None:
                rhs[k], rhs[p] = rhs[p], rhs[k]
            sign = -sign
        pivots.append(M[k][k])
        inv = reciprocal(M[k][k])
        for r in range(k + 1, n):
            if M[r][k].is_zero():
                continue
            f = M[r][k] * inv
            for c in range(k + 1, n):
                if not M[k][c].is_zero():
                    M[r][c] = M[r][c] - f * M[k][c]
            if rhs is not None and not rhs[k].is_zero():
                rhs[r] = rhs[r] - f * rhs[k]
    return M, pivots, sign


def solve_linear_jets(A: Sequence[Sequence[JetLike]], b: Sequence[JetLike]) -> list[Jet]:
    """Solve A x = b over jets by elimination, pivoting on constant terms."""
    n = len(A)
    if len(b) != n:
        raise JetError("dimension mismatch between A and b")
    template = next((e for row in A for e in row if isinstance(e, Jet)), None)
    if template is None:
        template = next((e for e in b if isinstance(e, Jet)), None)
    if template is None:
        raise JetError("at least one entry must be a Jet")
    rhs = [as_jet(e, template) for e in b]
    M, pivots, _ = _eliminate(A, rhs)
    x: list[Jet] = [None] * n  # type: ignore[list-item]
    for k in range(n - 1, -1, -1):
        acc = rhs[k]
        for c in range(k + 1, n):
            if not M[k][c].is_zero():
                acc = acc - M[k][c] * x[c]
        x[k] = acc / pivots[k]
    order = min(v.order for v in x)
    return [v.truncate(order) for v in x]


def det_jets(A: Sequence[Sequence[JetLike]]) -> Jet:
    """Determinant of a matrix of jets via the same pivoted elimination."""
    _, pivots, sign = _eliminate(A, None)
    out = pivots[0] * sign
    for p in pivots[1:]:
        out = out * p
    return out


def values(jets: Sequence[JetLike]) -> np.ndarray:
    """Constant terms of a sequence (or nested sequence) of jets."""
    return np.array(
        [values(j) if isinstance(j, (list, tuple)) else (j.value if isinstance(j, Jet) else float(j))
         for j in jets],
        dtype=float,
    )


# -- independent oracle --------------------------------------------------------


def _central_difference(f, point, multi_index, h):
    stencil_axes = []
    for i, k in enumerate(multi_index):
        if k == 0:
            continue
        offsets = [(k / 2.0 - j) * h for j in range(k + 1)]
        weights = [(-1.0) ** j * math.comb(k, j) / h**k for j in range(k + 1)]
        stencil_axes.append([(i, o, w) for o, w in zip(offsets, weights)])
    if not stencil_axes:
        return float(f(np.array(point, dtype=float)))
    total = 0.0
    for combo in product(*stencil_axes):
        z = np.array(point, dtype=float)
        weight = 1.0
        for i, o, w in combo:
            z[i] += o
            weight *= w
        total += weight * float(f(z))
    return total


def finite_difference_oracle(
    f: Callable[[np.ndarray], float],
    point: Sequence[float],
    multi_index: Sequence[int],
    step: float,
    extrapolate: bool = True,
) -> float:
    """Central-difference estimate of a mixed partial of ``f`` at ``point``.

    With ``extrapolate`` one Richardson step combines steps h and h/2, raising
    the truncation error from O(h^2) to O(h^4).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if len(multi_index) != len(point):
        raise ValueError("multi_index length must match the point dimension")
    d_h = _central_difference(f, point, multi_index, step)
    if not extrapolate or sum(multi_index) == 0:
        return d_h
    d_h2 = _central_difference(f, point, multi_index, step / 2.0)
    return (4.0 * d_h2 - d_h) / 3.0
