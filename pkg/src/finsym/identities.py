"""The identity battery: structural facts every Finsler structure must satisfy.

Each identity is evaluated at every sample point and reported through its
worst residual.  Residuals are relative to the size of the terms involved,
except the divergence identities, which compare absolute numbers.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .classify import SamplePlan, rel, sample_points
from .geometry import (
    FinslerStructure,
    connection,
    divergence,
    finsler_function,
    fundamental_form,
    sasaki_metric,
    torsion_field,
)
from .jets import values
from .lifts import (
    SlitPoint,
    TMFunction,
    apply_field,
    basic_section,
    complete_lift_function,
    constant_field,
    base_bracket,
    bracket_scale,
    canonical_delta,
    complete_lift,
    horizontal_lift_field,
    i_map,
    j_map,
    J_map,
    lie_bracket,
    lie_derivative_2tensor,
    liouville,
    tilde_lie,
    tilde_lie_metric,
    vertical_lift,
    vertical_part,
)
from .random_fields import random_base_field, random_projectable, random_section, random_tm_field

REPORT_VERSION = 1


@dataclass
class IdentityResult:
    name: str
    statement: str
    tol: float
    absolute: bool = False
    residuals: list[float] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return float(max(self.residuals)) if self.residuals else 0.0

    @property
    def passed(self) -> bool:
        return bool(self.residuals) and self.max_residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statement": self.statement,
            "residual_kind": "absolute" if self.absolute else "relative",
            "max_residual": self.max_residual,
            "tol": self.tol,
            "samples": len(self.residuals),
            "outcome": "pass" if self.passed else "fail",
        }


class Battery:
    """Random fixtures for one structure; methods return residuals at a point."""

    def __init__(self, fs: FinslerStructure, seed: int = 0, num_random: int = 3):
        self.fs = fs
        n = self.n = fs.dim
        rng = np.random.Generator(np.random.PCG64(seed))
        k = num_random
        self.X = [random_base_field(rng, n, name=f"X{i}") for i in range(k)]
        self.Y = [random_base_field(rng, n, name=f"Y{i}") for i in range(k)]
        self.sections = [random_section(rng, n, name=f"s{i}") for i in range(k)]
        self.xi = [random_tm_field(rng, n, name=f"xi{i}") for i in range(k)]
        self.eta = [random_tm_field(rng, n, name=f"eta{i}") for i in range(k)]
        self.zeta = [random_tm_field(rng, n, name=f"zeta{i}") for i in range(k)]
        self.proj_xi = [random_projectable(rng, n, name=f"P{i}") for i in range(k)]
        self.proj_eta = [random_projectable(rng, n, name=f"Q{i}") for i in range(k)]
        self.C = liouville(n)
        self.delta = canonical_delta(n)
        self.F = finsler_function(fs)
        self.basis = [self._basis(j) for j in range(n)]

    def _basis(self, j: int):
        v = [0.0] * self.n
        v[j] = 1.0
        return constant_field(v)

    # -- spray and connection ----------------------------------------------------

    def spray_second_order(self, p: SlitPoint) -> float:
        s = self.fs.spray.value(p)
        return rel(np.linalg.norm(s[: self.n] - np.array(p.y)), np.linalg.norm(p.y))

    def spray_homogeneity(self, p: SlitPoint) -> float:
        c = connection(self.fs, p)
        lhs = c.N @ np.array(p.y)
        return rel(np.linalg.norm(lhs - 2 * c.G), np.linalg.norm(c.N) * np.linalg.norm(p.y) + 2 * np.linalg.norm(c.G))

    def _v_scale(self, xi, eta, p) -> float:
        N = np.array([values(r) for r in self.fs.local(p).connection(0)])
        return bracket_scale(xi, eta, p) * (1.0 + np.linalg.norm(N))

    def tension(self, p: SlitPoint) -> float:
        worst = 0.0
        for X in self.basis:
            Xh = horizontal_lift_field(self.fs, X)
            t = vertical_part(self.fs, lie_bracket(Xh, self.C)).value(p)
            worst = max(worst, rel(np.linalg.norm(t), self._v_scale(Xh, self.C, p)))
        return worst

    def torsion(self, p: SlitPoint) -> float:
        worst = 0.0
        for X, Y in zip(self.X, self.Y):
            T = vertical_part(self.fs, torsion_field(self.fs, X, Y)).value(p)
            Xh, Yh = horizontal_lift_field(self.fs, X), horizontal_lift_field(self.fs, Y)
            scale = (
                bracket_scale(Xh, vertical_lift(Y), p)
                + bracket_scale(Yh, vertical_lift(X), p)
                + np.linalg.norm(base_bracket(X, Y).value(p.x))
            )
            worst = max(worst, rel(np.linalg.norm(T), scale))
        return worst

    def horizontal_compatibility(self, p: SlitPoint) -> float:
        worst = 0.0
        dF = self.F.expand(p, 1).gradient()
        for X in self.basis + self.X:
            h = horizontal_lift_field(self.fs, X).value(p)
            worst = max(worst, rel(abs(h @ dF), np.linalg.norm(h) * np.linalg.norm(dF)))
        return worst

    def horizontal_lift_projects(self, p: SlitPoint) -> float:
        worst = 0.0
        for X in self.X:
            a = j_map(horizontal_lift_field(self.fs, X)).value(p)
            Xv = X.value(p.x)
            worst = max(worst, rel(np.linalg.norm(a - Xv), np.linalg.norm(Xv)))
        return worst

    def vertical_kills_horizontal(self, p: SlitPoint) -> float:
        worst = 0.0
        for X in self.X:
            Xh = horizontal_lift_field(self.fs, X)
            v = vertical_part(self.fs, Xh).value(p)
            worst = max(worst, rel(np.linalg.norm(v), np.linalg.norm(Xh.value(p))))
        return worst

    def vertical_map_on_vertical(self, p: SlitPoint) -> float:
        worst = 0.0
        for s in self.sections:
            v = vertical_part(self.fs, i_map(s)).value(p)
            worst = max(worst, rel(np.linalg.norm(v - s.value(p)), np.linalg.norm(s.value(p))))
        return worst

    # -- metric data ----------------------------------------------------------------

    def metric_on_delta(self, p: SlitPoint) -> float:
        loc = self.fs.local(p)
        y = np.array(p.y)
        E = loc.energy.value
        return rel(abs(y @ loc.g @ y - 2 * E), 2 * abs(E))

    def omega_c_s(self, p: SlitPoint) -> float:
        W = fundamental_form(self.fs, p)
        c, s = self.C.value(p), self.fs.spray.value(p)
        E = self.fs.local(p).energy.value
        return rel(abs(c @ W @ s - 2 * E), np.abs(np.outer(c, s) * W).sum() + 2 * abs(E))

    def omega_vs_metric(self, p: SlitPoint) -> float:
        W = fundamental_form(self.fs, p)
        g = self.fs.local(p).g
        worst = 0.0
        for xi, eta in zip(self.xi, self.eta):
            a, b = xi.value(p), eta.value(p)
            lhs = J_map(xi).value(p) @ W @ b
            rhs = a[: self.n] @ g @ b[: self.n]
            worst = max(worst, rel(abs(lhs - rhs), np.linalg.norm(a[: self.n]) * np.linalg.norm(g) * np.linalg.norm(b[: self.n])))
        return worst

    def sasaki_on_liouville(self, p: SlitPoint) -> float:
        G = sasaki_metric(self.fs, p)
        c = self.C.value(p)
        E = self.fs.local(p).energy.value
        return rel(abs(c @ G @ c - 2 * E), 2 * abs(E))

    def density_vs_metric(self, p: SlitPoint) -> float:
        W = fundamental_form(self.fs, p)
        g = self.fs.local(p).g
        d1, d2 = abs(np.linalg.det(W)), np.linalg.det(g) ** 2
        return rel(abs(d1 - d2), d2)

    # -- vertical calculus ---------------------------------------------------------

    def grifone(self, p: SlitPoint) -> float:
        worst = 0.0
        for s in self.sections:
            lhs = j_map(lie_bracket(i_map(s), self.fs.spray)).value(p)
            ref = s.value(p)
            worst = max(worst, rel(np.linalg.norm(lhs - ref), bracket_scale(i_map(s), self.fs.spray, p)))
        return worst

    def vertical_derivative_of_delta(self, p: SlitPoint) -> float:
        """(nabla^v_s delta)^i = s^j d(y^i)/dy^j."""
        n = self.n
        d = self.delta.expand(p, 1)
        D = np.array([c.gradient()[n:] for c in d])
        worst = 0.0
        for s in self.sections:
            sv = s.value(p)
            worst = max(worst, rel(np.linalg.norm(D @ sv - sv), np.linalg.norm(sv)))
        return worst

    def tilde_lie_delta(self, p: SlitPoint) -> float:
        worst = 0.0
        for X in self.X:
            Xc = complete_lift(X)
            v = tilde_lie(self.fs, Xc, self.delta).value(p)
            worst = max(worst, rel(np.linalg.norm(v), self._v_scale(Xc, self.C, p)))
        return worst

    def tilde_lie_basic(self, p: SlitPoint) -> float:
        worst = 0.0
        for X, Y in zip(self.X, self.Y):
            Xc = complete_lift(X)
            lhs = tilde_lie(self.fs, Xc, basic_section(Y)).value(p)
            rhs = base_bracket(X, Y).value(p.x)
            worst = max(worst, rel(np.linalg.norm(lhs - rhs), self._v_scale(Xc, vertical_lift(Y), p)))
        return worst

    def lemma_commutator(self, p: SlitPoint, pairs=None) -> float:
        worst = 0.0
        for (xi, eta), s in zip(pairs or zip(self.proj_xi, self.proj_eta), self.sections * 10):
            worst = max(worst, lemma_commutator_residual(self.fs, xi, eta, s, p))
        return worst

    def lemma_intertwining(self, p: SlitPoint) -> float:
        worst = 0.0
        for X, eta in zip(self.X, self.eta):
            worst = max(worst, lemma_intertwining_residual(self.fs, X, eta, p))
        return worst

    def connection_independence(self, p: SlitPoint) -> float:
        from .models import builtin_finsler

        other = builtin_finsler("randers", {"b": ",".join(["0.5"] + ["-0.25"] * (self.n - 1))}, self.n)
        worst = 0.0
        for xi, s in zip(self.proj_xi, self.sections):
            a = tilde_lie(self.fs, xi, s).value(p)
            b = tilde_lie(other, xi, s).value(p)
            worst = max(worst, rel(np.linalg.norm(a - b), np.linalg.norm(a) + np.linalg.norm(b)))
        return worst

    def metric_lie_vs_omega(self, p: SlitPoint) -> float:
        """(L~_{X^c} g)(j xi, j eta) = (L_{X^c} omega)(J xi, eta)."""
        loc = self.fs.local(p)
        n = self.n
        worst = 0.0
        for X, xi, eta in zip(self.X, self.xi, self.eta):
            Lg = tilde_lie_metric(self.fs, X, p)
            xc1 = complete_lift(X).expand(p, 1)
            Lw = lie_derivative_2tensor(xc1, loc.omega(1))
            a, b = xi.value(p), eta.value(p)
            lhs = a[:n] @ Lg @ b[:n]
            rhs = J_map(xi).value(p) @ Lw @ b
            scale = np.linalg.norm(a[:n]) * np.linalg.norm(b[:n]) * (np.linalg.norm(Lg) + np.linalg.norm(Lw))
            worst = max(worst, rel(abs(lhs - rhs), scale))
        return worst

    # -- brackets --------------------------------------------------------------------

    def bracket_rules(self, p: SlitPoint) -> float:
        worst = 0.0
        C = self.C
        for X, Y in zip(self.X, self.Y):
            Xv, Yv, Xc, Yc = vertical_lift(X), vertical_lift(Y), complete_lift(X), complete_lift(Y)
            XY = base_bracket(X, Y)
            cases = [
                (lie_bracket(Xv, Yv), None, (Xv, Yv)),
                (lie_bracket(Xc, Yv), vertical_lift(XY), (Xc, Yv)),
                (lie_bracket(Xc, Yc), complete_lift(XY), (Xc, Yc)),
                (lie_bracket(C, Xc), None, (C, Xc)),
                (lie_bracket(C, Xv), -1.0 * Xv, (C, Xv)),
            ]
            for lhs_f, rhs_f, (u, v) in cases:
                lhs = lhs_f.value(p)
                rhs = np.zeros_like(lhs) if rhs_f is None else rhs_f.value(p)
                worst = max(worst, rel(np.linalg.norm(lhs - rhs), bracket_scale(u, v, p)))
        return worst

    def jacobi(self, p: SlitPoint) -> float:
        worst = 0.0
        for a, b, c in zip(self.xi, self.eta, self.zeta):
            terms = [
                lie_bracket(a, lie_bracket(b, c)),
                lie_bracket(b, lie_bracket(c, a)),
                lie_bracket(c, lie_bracket(a, b)),
            ]
            vals = [t.value(p) for t in terms]
            worst = max(worst, rel(np.linalg.norm(sum(vals)), sum(np.linalg.norm(v) for v in vals)))
        return worst

    def vertical_endomorphism(self, p: SlitPoint) -> float:
        """[J xi, C] - J[xi, C] = J xi, J^2 = 0 and J S = C."""
        worst = 0.0
        for xi in self.xi:
            Jxi = J_map(xi)
            lhs = lie_bracket(Jxi, self.C).value(p) - J_map(lie_bracket(xi, self.C)).value(p)
            ref = Jxi.value(p)
            scale = bracket_scale(Jxi, self.C, p) + bracket_scale(xi, self.C, p)
            worst = max(worst, rel(np.linalg.norm(lhs - ref), scale))
            worst = max(worst, rel(np.linalg.norm(J_map(Jxi).value(p)), np.linalg.norm(ref)))
        JS = J_map(self.fs.spray).value(p)
        worst = max(worst, rel(np.linalg.norm(JS - self.C.value(p)), np.linalg.norm(p.y)))
        return worst

    def lift_function_rules(self, p: SlitPoint) -> float:
        """X^v f^c = (X f)^v, X^c f^c = (X f)^c and C f^c = f^c for f = x1 x2 + x1^2."""
        n = self.n

        def f(xs):
            return xs[0] * xs[1] + xs[0] * xs[0]

        fc = complete_lift_function(n, f)
        worst = 0.0
        for X in self.X:

            def Xf(q, k, X=X):
                fj = f(q.coords(k + 1))
                Xj = X.expand(q, k)
                return sum((Xj[i] * fj.deriv(i) for i in range(n)), 0.0 * Xj[0])

            Xf_v = TMFunction(n, Xf)
            Xf_c = TMFunction(n, lambda q, k, Xf=Xf: _complete(Xf(q, k + 1), q, k))
            pairs = [
                (apply_field(vertical_lift(X), fc), Xf_v),
                (apply_field(complete_lift(X), fc), Xf_c),
            ]
            for lhs, rhs in pairs:
                u, v = lhs.value(p), rhs.value(p)
                worst = max(worst, rel(abs(u - v), abs(u) + abs(v)))
        u, v = apply_field(self.C, fc).value(p), fc.value(p)
        return max(worst, rel(abs(u - v), abs(u) + abs(v)))

    # -- volume ------------------------------------------------------------------

    def divergence_liouville(self, p: SlitPoint) -> float:
        return abs(divergence(self.fs, self.C, p) - self.n)

    def divergence_spray(self, p: SlitPoint) -> float:
        return abs(divergence(self.fs, self.fs.spray, p))

    def liouville_scales_omega(self, p: SlitPoint) -> float:
        loc = self.fs.local(p)
        L = lie_derivative_2tensor(self.C.expand(p, 1), loc.omega(1))
        W = fundamental_form(self.fs, p)
        return rel(np.linalg.norm(L - W), np.linalg.norm(W))


def _complete(h, p: SlitPoint, k: int):
    """y^i dh/dx^i from an order k + 1 expansion of a function of x."""
    n = p.n
    ys = p.coords(k)[n:]
    return sum((ys[i] * h.deriv(i) for i in range(n)), 0.0 * ys[0])


def lemma_commutator_residual(fs, xi, eta, s, p: SlitPoint) -> float:
    """L~_xi L~_eta s - L~_eta L~_xi s - L~_[xi, eta] s, relative to the terms."""
    a = tilde_lie(fs, xi, tilde_lie(fs, eta, s)).value(p)
    b = tilde_lie(fs, eta, tilde_lie(fs, xi, s)).value(p)
    c = tilde_lie(fs, lie_bracket(xi, eta), s).value(p)
    return rel(np.linalg.norm(a - b - c), np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(c))


def lemma_intertwining_residual(fs, X, eta, p: SlitPoint) -> float:
    """L~_{X^c}(j eta) = j [X^c, eta]."""
    Xc = complete_lift(X)
    lhs = tilde_lie(fs, Xc, j_map(eta)).value(p)
    rhs = j_map(lie_bracket(Xc, eta)).value(p)
    return rel(np.linalg.norm(lhs - rhs), bracket_scale(Xc, eta, p) + bracket_scale(Xc, J_map(eta), p))


@dataclass(frozen=True)
class Identity:
    name: str
    statement: str
    method: str
    absolute: bool = False


IDENTITIES: tuple[Identity, ...] = (
    Identity("spray_second_order", "J S = C: the x-part of the spray is y", "spray_second_order"),
    Identity("spray_homogeneity", "y^j dG^i/dy^j = 2 G^i", "spray_homogeneity"),
    Identity("tension", "the tension V[X^h, C] of the induced connection vanishes", "tension"),
    Identity("torsion", "[X^h, Y^v] - [Y^h, X^v] - [X, Y]^v = 0", "torsion"),
    Identity("horizontal_compatibility", "X^h F = 0", "horizontal_compatibility"),
    Identity("horizontal_projection", "j(X^h) = X", "horizontal_lift_projects"),
    Identity("vertical_kernel", "V(X^h) = 0", "vertical_kills_horizontal"),
    Identity("vertical_map_inverse", "V(i s) = s", "vertical_map_on_vertical"),
    Identity("metric_on_delta", "g(delta, delta) = 2E", "metric_on_delta"),
    Identity("omega_c_s", "omega(C, S) = 2E", "omega_c_s"),
    Identity("omega_vs_metric", "omega(J xi, eta) = g(j xi, j eta)", "omega_vs_metric"),
    Identity("sasaki_on_liouville", "G(C, C) = 2E for the Sasaki metric", "sasaki_on_liouville"),
    Identity("density_vs_metric", "|det omega| = (det g)^2", "density_vs_metric"),
    Identity("grifone", "j[i s, S] = s", "grifone"),
    Identity("vertical_derivative_delta", "nabla^v_s delta = s", "vertical_derivative_of_delta"),
    Identity("tilde_lie_delta", "L~_{X^c} delta = 0", "tilde_lie_delta"),
    Identity("tilde_lie_basic", "L~_{X^c} Y = [X, Y] on basic sections", "tilde_lie_basic"),
    Identity("tilde_lie_commutator", "[L~_xi, L~_eta] = L~_[xi, eta] on sections", "lemma_commutator"),
    Identity("tilde_lie_intertwining", "L~_{X^c}(j eta) = j[X^c, eta]", "lemma_intertwining"),
    Identity("tilde_lie_connection_free", "L~ does not depend on the connection used for V", "connection_independence"),
    Identity("metric_lie_vs_omega", "(L~_{X^c} g)(j xi, j eta) = (L_{X^c} omega)(J xi, eta)", "metric_lie_vs_omega"),
    Identity("bracket_rules", "lift bracket rules for vertical, complete and Liouville fields", "bracket_rules"),
    Identity("jacobi", "Jacobi identity for brackets on TM", "jacobi"),
    Identity("vertical_endomorphism", "[J, C] = J, J^2 = 0 and J S = C", "vertical_endomorphism"),
    Identity("lift_function_rules", "X^v f^c = (Xf)^v, X^c f^c = (Xf)^c, C f^c = f^c", "lift_function_rules"),
    Identity("liouville_scales_omega", "L_C omega = omega", "liouville_scales_omega"),
    Identity("divergence_liouville", "div C = n for the Dazord volume", "divergence_liouville", absolute=True),
    Identity("divergence_spray", "div S = 0 for the Dazord volume", "divergence_spray", absolute=True),
)


def run_identities(
    fs: FinslerStructure,
    plan: SamplePlan = SamplePlan(),
    tol: float = 1e-8,
    names: tuple[str, ...] | None = None,
    seed: int | None = None,
) -> list[IdentityResult]:
    groups, _ = sample_points(fs, plan)
    battery = Battery(fs, seed=plan.seed + 2 if seed is None else seed)
    chosen = [i for i in IDENTITIES if names is None or i.name in names]
    if names is not None:
        unknown = set(names) - {i.name for i in IDENTITIES}
        if unknown:
            raise ValueError(f"unknown identities: {', '.join(sorted(unknown))}")
    results = []
    for ident in chosen:
        res = IdentityResult(ident.name, ident.statement, tol, ident.absolute)
        fn: Callable[[SlitPoint], float] = getattr(battery, ident.method)
        for g in groups:
            for p in g:
                res.residuals.append(float(fn(p)))
        results.append(res)
    return results


def identity_report(
    fs: FinslerStructure, plan: SamplePlan, tol: float, config: dict | None = None, clock=None
) -> dict:
    results = run_identities(fs, plan, tol)
    stamp = (clock or (lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")))()
    cfg = dict(config or {})
    cfg.setdefault("finsler", fs.source or fs.name)
    cfg.setdefault("dim", fs.dim)
    cfg["plan"] = plan.to_dict()
    cfg["tol"] = tol
    return {
        "report_version": REPORT_VERSION,
        "artifact_version": __version__,
        "command": "identities",
        "timestamp": stamp,
        "config": cfg,
        "identities": [r.to_dict() for r in results],
        "all_pass": all(r.passed for r in results),
        "max_residual": max(r.max_residual for r in results),
    }


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False)
