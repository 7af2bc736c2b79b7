"""The Finsler core: metric, Hilbert form, fundamental form, canonical spray,
induced connection, Dazord density, divergence and Sasaki metric.

Everything is computed pointwise from one order-4 expansion of the energy
E = F^2/2 at a slit point.  Coordinate conventions:

* ``theta`` is the covector (dE/dy^i, 0) on TM.
* ``omega`` is the matrix W_ab = d_a theta_b - d_b theta_a, so its yx-block
  is g, its xy-block is -g and its yy-block vanishes.
* The canonical spray s solves W^T s = -dE, which is i_S omega = -dE with
  (i_S omega)_b = s^a W_ab.  It comes out as s = (y, -2G).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .jets import (
    MAX_ORDER,
    Jet,
    JetDomainError,
    JetError,
    SingularMatrixError,
    as_jet,
    coordinate_jets,
    det_jets,
    solve_linear_jets,
    sqrt,
    values,
)
from .lifts import (
    BaseVectorField,
    SlitPoint,
    TMFunction,
    TMVectorField,
    base_bracket,
    constant_field,
    horizontal_lift_field,
    liouville,
    lie_bracket,
    vertical_lift,
    vertical_map,
)

__all__ = [
    "SlitPoint",
    "FinslerStructure",
    "LocalGeometry",
    "ConnectionData",
    "ClassTolerance",
    "GeometryError",
    "DegenerateMetricError",
    "metric",
    "hilbert_form",
    "fundamental_form",
    "canonical_spray",
    "connection",
    "tension",
    "torsion",
    "dazord_density",
    "divergence",
    "sasaki_metric",
    "sasaki_pairing",
    "torsion_field",
    "energy_function",
    "finsler_function",
]

SPRAY_MAX_ORDER = MAX_ORDER - 2
DEGENERACY_THRESHOLD = 1e-10

EnergyFn = Callable[[Sequence[Jet], Sequence[Jet]], Jet]


class GeometryError(ValueError):
    """A geometric quantity cannot be formed at a point."""

    def __init__(self, message: str, point: SlitPoint | None = None):
        super().__init__(message)
        self.point = point

    def __str__(self) -> str:
        msg = super().__str__()
        if self.point is not None:
            msg += f" at x={list(self.point.x)}, y={list(self.point.y)}"
        return msg


class DegenerateMetricError(GeometryError):
    """The vertical Hessian of E is (numerically) singular."""


@dataclass(frozen=True)
class ClassTolerance:
    rel_tol: float = 1e-7
    fibre_spread_tol: float = 1e-6
    constancy_tol: float = 1e-6

    def __post_init__(self):
        for name in ("rel_tol", "fibre_spread_tol", "constancy_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive number, got {v!r}")


@dataclass(frozen=True, eq=False)
class FinslerStructure:
    """An energy function E(x, y) = F^2/2 evaluable on jets.

    ``energy`` takes the n x-jets and n y-jets and returns a jet.  ``x_box`` and
    ``y_box`` are the default sampling intervals and ``safe`` an optional
    predicate ``safe(x, y) -> bool`` rejecting points near singular loci.
    """

    dim: int
    energy: EnergyFn
    name: str = "custom"
    params: Mapping[str, object] = field(default_factory=dict)
    x_box: tuple[tuple[float, float], ...] | None = None
    y_box: tuple[tuple[float, float], ...] | None = None
    safe: Callable[[np.ndarray, np.ndarray], bool] | None = None
    source: str | None = None

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dim!r}")

    def local(self, p: SlitPoint) -> "LocalGeometry":
        if p.n != self.dim:
            raise ValueError(f"point has dimension {p.n}, structure has {self.dim}")
        return _local(self, p)

    @cached_property
    def spray(self) -> TMVectorField:
        """The canonical spray as a lazily expanded field (orders up to 2)."""

        def expand(p: SlitPoint, k: int) -> list[Jet]:
            return self.local(p).spray(k)

        return TMVectorField(self.dim, expand, name="S")

    def energy_value(self, x: Sequence[float], y: Sequence[float]) -> float:
        z = coordinate_jets(tuple(float(v) for v in x) + tuple(float(v) for v in y), 0)
        return as_jet(self.energy(z[: self.dim], z[self.dim :]), z[0]).value

    def scaled(self, c: float) -> "FinslerStructure":
        """The structure with Finsler function c F (energy c^2 E)."""
        if not c > 0:
            raise ValueError("scale factor must be positive")
        c2 = float(c) ** 2
        base = self.energy
        return FinslerStructure(
            self.dim,
            lambda xs, ys: c2 * base(xs, ys),
            name=f"{c}*{self.name}",
            params=dict(self.params),
            x_box=self.x_box,
            y_box=self.y_box,
            safe=self.safe,
            source=None if self.source is None else f"({c})*({self.source})",
        )

    @classmethod
    def from_expression(cls, source: str, dim: int, **meta) -> "FinslerStructure":
        """Build from an expression for F in x1..xn, y1..yn."""
        from .exprlang import evaluate_jets, parse

        node = parse(source, dim)

        def energy(xs, ys):
            F = evaluate_jets(node, xs, ys)
            return 0.5 * (F * F)

        meta.setdefault("name", "expr")
        return cls(dim, energy, source=source, **meta)


@lru_cache(maxsize=4096)
def _local(fs: FinslerStructure, p: SlitPoint) -> "LocalGeometry":
    return LocalGeometry(fs, p)


class LocalGeometry:
    """All jet data at one slit point, computed lazily and cached."""

    def __init__(self, fs: FinslerStructure, p: SlitPoint):
        self.fs = fs
        self.p = p
        self.n = fs.dim
        z = p.coords(MAX_ORDER)
        try:
            E = fs.energy(z[: self.n], z[self.n :])
        except JetDomainError as exc:
            raise exc.with_point(p.jet_point()) if exc.point is None else exc
        self.energy = as_jet(E, z[0])

    @cached_property
    def dE(self) -> list[Jet]:
        return [self.energy.deriv(a) for a in range(2 * self.n)]

    @cached_property
    def g_jets(self) -> list[list[Jet]]:
        n = self.n
        rows = []
        for i in range(n):
            th = self.dE[n + i]
            rows.append([th.deriv(n + j) for j in range(n)])
        # symmetrize exactly: mixed partials of the same jet agree up to rounding
        return [[rows[i][j] if i <= j else rows[j][i] for j in range(n)] for i in range(n)]

    @cached_property
    def g(self) -> np.ndarray:
        g = np.array([values(row) for row in self.g_jets])
        scale = max(np.max(np.abs(g)), 1e-300)
        det = np.linalg.det(g)
        if not np.isfinite(det) or abs(det) < DEGENERACY_THRESHOLD * scale**self.n:
            raise DegenerateMetricError(f"metric is degenerate (det g = {det:.3e})", self.p)
        return g

    def theta_covector(self, order: int) -> list[Jet]:
        n = self.n
        th = [self.dE[n + i].truncate(order) for i in range(n)]
        return th + [Jet.constant(0.0, order, 2 * n)] * n

    @cached_property
    def _omega_full(self) -> list[list[Jet]]:
        n = self.n
        m = 2 * n
        th = [self.dE[n + i] for i in range(n)]
        zero = Jet.constant(0.0, MAX_ORDER - 2, m)
        dth = [[t.deriv(j) for j in range(n)] for t in th]  # dth[i][j] = d theta_i / dx^j
        W = [[zero] * m for _ in range(m)]
        for i in range(n):
            for j in range(n):
                if i != j:
                    W[j][i] = dth[i][j] - dth[j][i]
                W[n + j][i] = self.g_jets[i][j]
                W[i][n + j] = -self.g_jets[i][j]
        return W

    def omega(self, order: int) -> list[list[Jet]]:
        return [[c.truncate(order) for c in row] for row in self._omega_full]

    @cached_property
    def _spray_full(self) -> list[Jet]:
        self.g  # degeneracy check first, for a clearer error
        W = self._omega_full
        m = 2 * self.n
        Wt = [[W[b][a] for b in range(m)] for a in range(m)]
        rhs = [-d.truncate(MAX_ORDER - 2) for d in self.dE]
        try:
            return solve_linear_jets(Wt, rhs)
        except SingularMatrixError as exc:
            raise DegenerateMetricError(f"fundamental form is singular: {exc}", self.p) from exc

    def spray(self, order: int) -> list[Jet]:
        if order > SPRAY_MAX_ORDER:
            raise JetError(f"spray expansions are available up to order {SPRAY_MAX_ORDER}")
        return [c.truncate(order) for c in self._spray_full]

    def connection(self, order: int) -> list[list[Jet]]:
        n = self.n
        s = self.spray(order + 1)
        return [[-0.5 * s[n + i].deriv(n + j) for j in range(n)] for i in range(n)]

    @cached_property
    def _rho_full(self) -> Jet:
        d = det_jets(self.omega(1))
        if d.value < 0:
            d = -d
        if d.value <= 0:
            raise DegenerateMetricError("fundamental form is singular", self.p)
        return sqrt(d)

    def rho(self, order: int = 1) -> Jet:
        if order > 1:
            raise JetError("density expansions are available up to order 1")
        return self._rho_full.truncate(order)

    def sasaki(self, order: int) -> list[list[Jet]]:
        """[[g + N^T g N, N^T g], [g N, g]] as jets."""
        n = self.n
        g = [[c.truncate(order) for c in row] for row in self.g_jets]
        N = self.connection(order)
        gN = [[sum((g[i][k] * N[k][j] for k in range(n)), Jet.constant(0.0, order, 2 * n)) for j in range(n)] for i in range(n)]
        NtgN = [
            [sum((N[k][i] * gN[k][j] for k in range(n)), Jet.constant(0.0, order, 2 * n)) for j in range(n)]
            for i in range(n)
        ]
        top = [[g[i][j] + NtgN[i][j] for j in range(n)] + [gN[j][i] for j in range(n)] for i in range(n)]
        bottom = [[gN[i][j] for j in range(n)] + [g[i][j] for j in range(n)] for i in range(n)]
        return top + bottom


@dataclass(frozen=True)
class ConnectionData:
    """Spray coefficients G, connection coefficients N and Berwald coefficients B at a point."""

    G: np.ndarray
    N: np.ndarray
    B: np.ndarray
    horizontal_residual: float = 0.0

    def homogeneity_residual(self, y: Sequence[float]) -> float:
        lhs = self.N @ np.asarray(y)
        return float(np.linalg.norm(lhs - 2 * self.G) / max(np.linalg.norm(2 * self.G), np.linalg.norm(lhs), 1e-300))

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "N": self.N.tolist(), "B": self.B.tolist()}


def metric(fs: FinslerStructure, p: SlitPoint) -> np.ndarray:
    return fs.local(p).g.copy()


def hilbert_form(fs: FinslerStructure, p: SlitPoint) -> np.ndarray:
    loc = fs.local(p)
    return values(loc.dE[fs.dim :])


def fundamental_form(fs: FinslerStructure, p: SlitPoint) -> np.ndarray:
    return np.array([values(row) for row in fs.local(p).omega(0)])


def canonical_spray(fs: FinslerStructure, p: SlitPoint, order: int = SPRAY_MAX_ORDER) -> list[Jet]:
    return fs.local(p).spray(order)


def _basis(n: int, j: int) -> BaseVectorField:
    v = [0.0] * n
    v[j] = 1.0
    f = constant_field(v)
    f.name = f"e{j + 1}"
    return f


def connection(fs: FinslerStructure, p: SlitPoint, check_tol: float = 1e-9) -> ConnectionData:
    n = fs.dim
    loc = fs.local(p)
    s = loc.spray(SPRAY_MAX_ORDER)
    G = -0.5 * values(s[n:])
    Nj = loc.connection(1)
    N = np.array([values(row) for row in Nj])
    B = np.array([[[Nj[i][j].gradient()[n + k] for k in range(n)] for j in range(n)] for i in range(n)])
    B = 0.5 * (B + B.transpose(0, 2, 1))
    worst = 0.0
    for j in range(n):
        h = horizontal_lift_field(fs, _basis(n, j)).value(p)
        scale = max(1.0, np.linalg.norm(N[:, j]))
        worst = max(worst, np.linalg.norm(h[n:] + N[:, j]) / scale)
    if worst > check_tol:
        raise GeometryError(f"horizontal lift disagrees with N (residual {worst:.3e})", p)
    return ConnectionData(G, N, B, worst)


def tension(fs: FinslerStructure, p: SlitPoint) -> np.ndarray:
    """Column j is V[e_j^h, C]."""
    n = fs.dim
    C = liouville(n)
    cols = [vertical_map(fs, lie_bracket(horizontal_lift_field(fs, _basis(n, j)), C), p) for j in range(n)]
    return np.array(cols).T


def torsion_field(fs: FinslerStructure, X: BaseVectorField, Y: BaseVectorField) -> TMVectorField:
    """[X^h, Y^v] - [Y^h, X^v] - [X, Y]^v."""
    Xh, Yh = horizontal_lift_field(fs, X), horizontal_lift_field(fs, Y)
    return (
        lie_bracket(Xh, vertical_lift(Y))
        - lie_bracket(Yh, vertical_lift(X))
        - vertical_lift(base_bracket(X, Y))
    )


def torsion(fs: FinslerStructure, p: SlitPoint, X: BaseVectorField, Y: BaseVectorField) -> np.ndarray:
    return vertical_map(fs, torsion_field(fs, X, Y), p)


def dazord_density(fs: FinslerStructure, p: SlitPoint) -> float:
    return fs.local(p).rho(0).value


def divergence(fs: FinslerStructure, xi: TMVectorField, p: SlitPoint) -> float:
    """sum_a d xi^a/dz^a + xi . grad(rho)/rho over the 2n coordinates."""
    comps = xi.expand(p, 1)
    rho = fs.local(p).rho(1)
    trace = sum(c.gradient()[a] for a, c in enumerate(comps))
    grad = rho.gradient()
    return float(trace + values(comps) @ grad / rho.value)


def sasaki_metric(fs: FinslerStructure, p: SlitPoint) -> np.ndarray:
    return np.array([values(row) for row in fs.local(p).sasaki(0)])


def sasaki_pairing(fs: FinslerStructure, p: SlitPoint, xi: np.ndarray, eta: np.ndarray) -> float:
    """G(xi, eta) = g(j xi, j eta) + g(V xi, V eta) from the defining formula."""
    n = fs.dim
    loc = fs.local(p)
    N = np.array([values(row) for row in loc.connection(0)])
    g = loc.g
    a1, b1, a2, b2 = xi[:n], xi[n:], eta[:n], eta[n:]
    return float(a1 @ g @ a2 + (b1 + N @ a1) @ g @ (b2 + N @ a2))


def energy_function(fs: FinslerStructure):
    """E as a TMFunction."""
    return TMFunction(fs.dim, lambda p, k: fs.local(p).energy.truncate(k), name="E")


def finsler_function(fs: FinslerStructure):
    """F = sqrt(2E) as a TMFunction (orders up to 4)."""
    return TMFunction(fs.dim, lambda p, k: sqrt(2.0 * fs.local(p).energy).truncate(k), name="F")

