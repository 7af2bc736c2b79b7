"""Vector fields on the tangent bundle and the lift calculus.

Fields are handled through local expansions: ``field.expand(p, order)`` returns
the Taylor jets of the components at the slit point ``p`` in the 2n coordinates
(x^1..x^n, y^1..y^n).  A differential operator consumes one order of its
inputs, so a bracket requested at order k asks its arguments for order k + 1.

Components of a field on TM are written (a, b): a is the x-part, b the y-part.

The connection-dependent operators take either a spray field or any object with
a ``spray`` attribute (a FinslerStructure); the Ehresmann connection is always
the one induced by that spray, with coefficients N^i_j = dG^i/dy^j where
S = y^i d/dx^i - 2 G^i d/dy^i.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, JetPoint, as_jet, coordinate_jets, values

ExpandFn = Callable[["SlitPoint", int], Sequence[Jet]]


class NotProjectableError(ValueError):
    """The tilde Lie derivative was requested along a non-projectable field."""


@dataclass(frozen=True)
class SlitPoint:
    """A point (x, y) of the slit tangent bundle in a single chart."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        if len(x) != len(y):
            raise ValueError(f"x has {len(x)} entries but y has {len(y)}")
        if not any(y):
            raise ValueError("y must be nonzero on the slit tangent bundle")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def z(self) -> np.ndarray:
        return np.array(self.x + self.y)

    def coords(self, order: int) -> tuple[Jet, ...]:
        return coordinate_jets(self.x + self.y, order)

    def jet_point(self) -> JetPoint:
        return JetPoint.tangent(self.x, self.y)

    def with_y(self, y: Sequence[float]) -> "SlitPoint":
        return SlitPoint(self.x, tuple(y))


def _lin(terms: Sequence[tuple[Jet, Jet]], like: Jet) -> Jet:
    """Sum of products, skipping identically zero factors."""
    acc = None
    for a, b in terms:
        if a.is_zero() or b.is_zero():
            continue
        t = a * b
        acc = t if acc is None else acc + t
    if acc is None:
        k = min(min(a.order, b.order) for a, b in terms) if terms else like.order
        return Jet.constant(0.0, k, like.num_vars)
    return acc


def _zero(like: Jet, order: int | None = None) -> Jet:
    return Jet.constant(0.0, like.order if order is None else order, like.num_vars)


def _jacobian(comps: Sequence[Jet], nvars: int) -> list[list[Jet]]:
    out = []
    for c in comps:
        if c.is_zero():
            z = _zero(c, c.order - 1)
            out.append([z] * nvars)
        else:
            out.append([c.deriv(v) for v in range(nvars)])
    return out


# -- base fields -----------------------------------------------------------------


class BaseVectorField:
    """A vector field on M, evaluable on jets of the base coordinates.

    ``func`` maps a sequence of n coordinate jets to n component jets (or
    numbers).  Derived fields (brackets, sums) supply ``expand`` instead.
    """

    def __init__(
        self, dim: int, func=None, *, expand: ExpandFn | None = None, name: str = "", source: str | None = None
    ):
        if (func is None) == (expand is None):
            raise ValueError("give exactly one of func or expand")
        self.dim = dim
        self._func = func
        self._expand = expand
        self.name = name or "field"
        self.source = source

    def __repr__(self) -> str:
        return f"BaseVectorField({self.name!r}, dim={self.dim})"

    def expand(self, p: SlitPoint, order: int) -> list[Jet]:
        if self._func is not None:
            xs = p.coords(order)[: self.dim]
            comps = list(self._func(xs))
            if len(comps) != self.dim:
                raise ValueError(f"{self.name}: expected {self.dim} components, got {len(comps)}")
            return [as_jet(c, xs[0]) for c in comps]
        return list(self._expand(p, order))

    def value(self, x: Sequence[float]) -> np.ndarray:
        y = (1.0,) + (0.0,) * (self.dim - 1)
        return values(self.expand(SlitPoint(tuple(x), y), 0))

    def __add__(self, other: "BaseVectorField") -> "BaseVectorField":
        return BaseVectorField(
            self.dim,
            expand=lambda p, k: [a + b for a, b in zip(self.expand(p, k), other.expand(p, k))],
            name=f"({self.name} + {other.name})",
        )

    def __sub__(self, other: "BaseVectorField") -> "BaseVectorField":
        return self + (-1.0) * other

    def __rmul__(self, c: float) -> "BaseVectorField":
        return BaseVectorField(
            self.dim, expand=lambda p, k: [c * a for a in self.expand(p, k)], name=f"{c}*{self.name}"
        )

    def __neg__(self) -> "BaseVectorField":
        return (-1.0) * self


def zero_field(n: int) -> BaseVectorField:
    return BaseVectorField(n, lambda xs: [0.0] * n, name="zero")


def constant_field(v: Sequence[float]) -> BaseVectorField:
    v = tuple(float(c) for c in v)
    return BaseVectorField(len(v), lambda xs: list(v), name=f"const{v}")


def base_bracket(X: BaseVectorField, Y: BaseVectorField) -> BaseVectorField:
    """[X, Y]^i = X^l dY^i/dx^l - Y^l dX^i/dx^l."""
    n = X.dim

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        Xj, Yj = X.expand(p, k + 1), Y.expand(p, k + 1)
        DX, DY = _jacobian(Xj, 2 * n), _jacobian(Yj, 2 * n)
        out = []
        for i in range(n):
            terms = [(Xj[l], DY[i][l]) for l in range(n)] + [(-Yj[l], DX[i][l]) for l in range(n)]
            out.append(_lin(terms, Xj[0]).truncate(k))
        return out

    return BaseVectorField(n, expand=expand, name=f"[{X.name}, {Y.name}]")


# -- fields on TM ------------------------------------------------------------------


class TMVectorField:
    """A vector field on the slit tangent bundle, known through its expansions.

    ``base`` is the projection when the field is projectable (the zero field for
    vertical fields) and None otherwise.
    """

    def __init__(self, dim: int, expand: ExpandFn, *, base: BaseVectorField | None = None, name: str = ""):
        self.dim = dim
        self._expand = expand
        self.base = base
        self.name = name or "xi"

    def __repr__(self) -> str:
        return f"TMVectorField({self.name!r}, dim={self.dim}, projectable={self.projectable})"

    @property
    def projectable(self) -> bool:
        return self.base is not None

    def expand(self, p: SlitPoint, order: int) -> list[Jet]:
        comps = [c.truncate(order) for c in self._expand(p, order)]
        if len(comps) != 2 * self.dim:
            raise ValueError(f"{self.name}: expected {2 * self.dim} components, got {len(comps)}")
        return comps

    def value(self, p: SlitPoint) -> np.ndarray:
        return values(self.expand(p, 0))

    def __add__(self, other: "TMVectorField") -> "TMVectorField":
        base = self.base + other.base if self.projectable and other.projectable else None
        return TMVectorField(
            self.dim,
            lambda p, k: [a + b for a, b in zip(self.expand(p, k), other.expand(p, k))],
            base=base,
            name=f"({self.name} + {other.name})",
        )

    def __sub__(self, other: "TMVectorField") -> "TMVectorField":
        return self + (-1.0) * other

    def __rmul__(self, c: float) -> "TMVectorField":
        return TMVectorField(
            self.dim,
            lambda p, k: [c * a for a in self.expand(p, k)],
            base=None if self.base is None else c * self.base,
            name=f"{c}*{self.name}",
        )

    def __neg__(self) -> "TMVectorField":
        return (-1.0) * self


class Section:
    """A section of the pull-back bundle, given by its principal part (n components)."""

    def __init__(self, dim: int, expand: ExpandFn, name: str = ""):
        self.dim = dim
        self._expand = expand
        self.name = name or "section"

    def __repr__(self) -> str:
        return f"Section({self.name!r}, dim={self.dim})"

    def expand(self, p: SlitPoint, order: int) -> list[Jet]:
        return [c.truncate(order) for c in self._expand(p, order)]

    def value(self, p: SlitPoint) -> np.ndarray:
        return values(self.expand(p, 0))


class TMFunction:
    """A scalar function on the slit tangent bundle."""

    def __init__(self, dim: int, expand: Callable[[SlitPoint, int], Jet], name: str = ""):
        self.dim = dim
        self._expand = expand
        self.name = name or "f"

    def expand(self, p: SlitPoint, order: int) -> Jet:
        return self._expand(p, order).truncate(order)

    def value(self, p: SlitPoint) -> float:
        return self.expand(p, 0).value


def vertical_lift_function(n: int, f: Callable[[Sequence[Jet]], Jet], name: str = "f") -> TMFunction:
    """f^v = f o tau."""

    def expand(p: SlitPoint, k: int) -> Jet:
        xs = p.coords(k)[:n]
        return as_jet(f(xs), xs[0])

    return TMFunction(n, expand, name=f"{name}^v")


def complete_lift_function(n: int, f: Callable[[Sequence[Jet]], Jet], name: str = "f") -> TMFunction:
    """f^c(x, y) = y^i df/dx^i."""

    def expand(p: SlitPoint, k: int) -> Jet:
        z = p.coords(k + 1)
        fx = as_jet(f(z[:n]), z[0])
        ys = p.coords(k)[n:]
        return _lin([(ys[i], fx.deriv(i)) for i in range(n)], ys[0])

    return TMFunction(n, expand, name=f"{name}^c")


def apply_field(xi: TMVectorField, f: TMFunction) -> TMFunction:
    """The derivative xi(f) = xi^a df/dz^a."""
    m = 2 * xi.dim

    def expand(p: SlitPoint, k: int) -> Jet:
        comps = xi.expand(p, k)
        fj = f.expand(p, k + 1)
        return _lin([(comps[a], fj.deriv(a)) for a in range(m)], fj)

    return TMFunction(xi.dim, expand, name=f"{xi.name}({f.name})")


def vertical_lift(X: BaseVectorField) -> TMVectorField:
    """X^v = (0, X(x))."""
    n = X.dim

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        comps = X.expand(p, k)
        return [_zero(comps[0])] * n + comps

    return TMVectorField(n, expand, base=zero_field(n), name=f"{X.name}^v")


def complete_lift(X: BaseVectorField) -> TMVectorField:
    """X^c = (X(x), DX(x) y)."""
    n = X.dim

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        Xj = X.expand(p, k + 1)
        ys = p.coords(k)[n:]
        DX = _jacobian(Xj, 2 * n)
        b = [_lin([(DX[i][l], ys[l]) for l in range(n)], ys[0]) for i in range(n)]
        return [c.truncate(k) for c in Xj] + b

    return TMVectorField(n, expand, base=X, name=f"{X.name}^c")


def liouville(n: int) -> TMVectorField:
    """The Liouville field C = (0, y)."""

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        z = p.coords(k)
        return [_zero(z[0])] * n + list(z[n:])

    return TMVectorField(n, expand, base=zero_field(n), name="C")


def canonical_delta(n: int) -> Section:
    """The canonical section delta, whose principal part is y."""
    return Section(n, lambda p, k: list(p.coords(k)[n:]), name="delta")


def basic_section(X: BaseVectorField) -> Section:
    return Section(X.dim, X.expand, name=f"{X.name}^")


def _bracket_expansion(xi: Sequence[Jet], eta: Sequence[Jet]) -> list[Jet]:
    m = len(xi)
    dxi, deta = _jacobian(xi, m), _jacobian(eta, m)
    out = []
    for a in range(m):
        terms = [(xi[c], deta[a][c]) for c in range(m)] + [(-eta[c], dxi[a][c]) for c in range(m)]
        out.append(_lin(terms, xi[0]))
    return out


def lie_bracket(xi: TMVectorField, eta: TMVectorField) -> TMVectorField:
    """[xi, eta] = D(eta) xi - D(xi) eta, as a lazily expanded field."""
    base = base_bracket(xi.base, eta.base) if xi.projectable and eta.projectable else None

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        return _bracket_expansion(xi.expand(p, k + 1), eta.expand(p, k + 1))

    return TMVectorField(xi.dim, expand, base=base, name=f"[{xi.name}, {eta.name}]")


def bracket(xi: TMVectorField, eta: TMVectorField, p: SlitPoint) -> np.ndarray:
    """Value of [xi, eta] at p."""
    return lie_bracket(xi, eta).value(p)


def bracket_scale(xi: TMVectorField, eta: TMVectorField, p: SlitPoint) -> float:
    """|D(eta) xi| + |D(xi) eta| at p; the natural magnitude of the bracket terms."""
    a, b = xi.expand(p, 1), eta.expand(p, 1)
    va, vb = values(a), values(b)
    Da = np.array([c.gradient() for c in a])
    Db = np.array([c.gradient() for c in b])
    return float(np.linalg.norm(Db @ va) + np.linalg.norm(Da @ vb))


def i_map(s: Section) -> TMVectorField:
    """Embed a section as the vertical field (0, s)."""
    n = s.dim

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        comps = s.expand(p, k)
        return [_zero(comps[0])] * n + comps

    return TMVectorField(n, expand, base=zero_field(n), name=f"i({s.name})")


def j_map(xi: TMVectorField) -> Section:
    """The principal part of j(xi) is the x-part of xi."""
    n = xi.dim
    return Section(n, lambda p, k: xi.expand(p, k)[:n], name=f"j({xi.name})")


def J_map(xi: TMVectorField) -> TMVectorField:
    """Vertical endomorphism J = i o j: (a, b) -> (0, a)."""
    return i_map(j_map(xi))


# -- connection induced by a spray -------------------------------------------------


def _spray(obj) -> TMVectorField:
    if isinstance(obj, TMVectorField):
        return obj
    return obj.spray


def connection_jets(spray_or_fs, p: SlitPoint, order: int) -> list[list[Jet]]:
    """N^i_j = dG^i/dy^j = -1/2 d(S_y^i)/dy^j as jets of the given order."""
    S = _spray(spray_or_fs)
    n = S.dim
    sj = S.expand(p, order + 1)
    return [[-0.5 * sj[n + i].deriv(n + j) for j in range(n)] for i in range(n)]


def vertical_part(spray_or_fs, xi: TMVectorField) -> Section:
    """V(xi) = b + N a: the vertical mapping of the spray-induced connection."""
    n = xi.dim

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        comps = xi.expand(p, k)
        a, b = comps[:n], comps[n:]
        if all(c.is_zero() for c in a):
            return b
        N = connection_jets(spray_or_fs, p, k)
        return [b[i] + _lin([(N[i][j], a[j]) for j in range(n)], b[i]) for i in range(n)]

    return Section(n, expand, name=f"V({xi.name})")


def vertical_map(spray_or_fs, xi: TMVectorField, p: SlitPoint) -> np.ndarray:
    return vertical_part(spray_or_fs, xi).value(p)


def horizontal_lift_field(spray_or_fs, X: BaseVectorField) -> TMVectorField:
    """X^h = 1/2 (X^c + [X^v, S])."""
    S = _spray(spray_or_fs)
    Xc, Xv = complete_lift(X), vertical_lift(X)
    inner = lie_bracket(Xv, S)

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        return [0.5 * (a + b) for a, b in zip(Xc.expand(p, k), inner.expand(p, k))]

    return TMVectorField(X.dim, expand, base=X, name=f"{X.name}^h")


def horizontal_lift(spray_or_fs, X: BaseVectorField, p: SlitPoint) -> np.ndarray:
    return horizontal_lift_field(spray_or_fs, X).value(p)


def is_projectable(xi: TMVectorField, p: SlitPoint, rel_tol: float = 1e-12) -> bool:
    """Flag check, falling back to comparing the x-part at 5 points of the fibre."""
    if xi.projectable:
        return True
    n = xi.dim
    y = np.array(p.y)
    ref = xi.value(p)[:n]
    c, s = np.cos(0.7), np.sin(0.7)
    probes = [1.7 * y, -0.6 * y, y + 0.3 * np.roll(y, 1), np.roll(y, 1) * c + y * s]
    probes.append(y + 0.5 * np.linalg.norm(y) * np.eye(n)[0])
    for q in probes:
        if not np.any(q):
            continue
        other = xi.value(p.with_y(q))[:n]
        if np.linalg.norm(other - ref) > rel_tol * max(1.0, np.linalg.norm(ref)):
            return False
    return True


def tilde_lie(spray_or_fs, xi: TMVectorField, s: Section) -> Section:
    """The Lie derivative of a section along a projectable field: V[xi, i s]."""
    br = lie_bracket(xi, i_map(s))
    checked: set[SlitPoint] = set()

    def expand(p: SlitPoint, k: int) -> list[Jet]:
        if p not in checked:
            if not is_projectable(xi, p):
                raise NotProjectableError(f"{xi.name} is not projectable")
            checked.add(p)
        return vertical_part(spray_or_fs, br).expand(p, k)

    return Section(xi.dim, expand, name=f"L~_{xi.name}({s.name})")


def tilde_lie_section(spray_or_fs, xi: TMVectorField, s: Section, p: SlitPoint) -> np.ndarray:
    return tilde_lie(spray_or_fs, xi, s).value(p)


# -- Lie derivatives of tensors along fields on TM ------------------------------------


def lie_derivative_covector(xi: Sequence[Jet], t: Sequence[Jet]) -> np.ndarray:
    """(L_xi t)_a = xi^c d_c t_a + (d_a xi^c) t_c, from order >= 1 expansions."""
    v = values(xi)
    Dxi = np.array([c.gradient() for c in xi])  # Dxi[c, a] = d_a xi^c
    tv = values(t)
    Dt = np.array([c.gradient() for c in t])  # Dt[a, c] = d_c t_a
    return Dt @ v + Dxi.T @ tv


def lie_2tensor_terms(xi: Sequence[Jet], T: Sequence[Sequence[Jet]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three terms xi^c d_c T_ab, (d_a xi^c) T_cb and (d_b xi^c) T_ac."""
    v = values(xi)
    Dxi = np.array([c.gradient() for c in xi])
    Tv = np.array([values(row) for row in T])
    dT = np.array([[c.gradient() for c in row] for row in T])  # dT[a, b, c]
    return dT @ v, Dxi.T @ Tv, Tv @ Dxi


def lie_derivative_2tensor(xi: Sequence[Jet], T: Sequence[Sequence[Jet]]) -> np.ndarray:
    """(L_xi T)_ab = xi^c d_c T_ab + (d_a xi^c) T_cb + (d_b xi^c) T_ac."""
    return sum(lie_2tensor_terms(xi, T))


def tilde_lie_metric(fs, X: BaseVectorField, p: SlitPoint) -> np.ndarray:
    """(L~_{X^c} g)_ij = X^c(g_ij) + (d_i X^k) g_kj + (d_j X^k) g_ik."""
    n = X.dim
    loc = fs.local(p)
    xc = complete_lift(X).value(p)
    g = np.array([[c.value for c in row] for row in loc.g_jets])
    dg = np.array([[c.gradient() for c in row] for row in loc.g_jets])
    DX = np.array([c.gradient()[:n] for c in X.expand(p, 1)])  # DX[k, i] = d_i X^k
    return dg @ xc + DX.T @ g + g @ DX


def lie_form_theta(fs, X: BaseVectorField, p: SlitPoint) -> np.ndarray:
    """L_{X^c} of the Hilbert 1-form theta = (dE/dy^i) dx^i, as a 2n-covector."""
    loc = fs.local(p)
    return lie_derivative_covector(complete_lift(X).expand(p, 1), loc.theta_covector(1))


def lie_form_omega(fs, X: BaseVectorField, p: SlitPoint) -> np.ndarray:
    loc = fs.local(p)
    return lie_derivative_2tensor(complete_lift(X).expand(p, 1), loc.omega(1))


def lie_metric_sasaki(fs, X: BaseVectorField, p: SlitPoint) -> np.ndarray:
    loc = fs.local(p)
    return lie_derivative_2tensor(complete_lift(X).expand(p, 1), loc.sasaki(1))


def lie_term_scale(xi: Sequence[Jet], T: Sequence[Sequence[Jet]]) -> float:
    """Sum of the norms of the terms of L_xi T; the natural size of the result."""
    return float(sum(np.linalg.norm(t) for t in lie_2tensor_terms(xi, T)))
