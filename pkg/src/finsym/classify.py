"""Sample-based classification of base vector fields.

A verdict of "holds" means the defining residual stayed within tolerance at
every sampled slit point; sampling cannot certify a global property, so reports
phrase results as "consistent with".  A residual between tol and 10*tol gives
"indeterminate" rather than a coin-flip answer.

All residuals are relative: the norm of (lhs - rhs) divided by the sum of the
norms of the individual terms that make up lhs and rhs (floored at 1e-8), so a
field whose terms all vanish scores zero.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .exprlang import ExprError
from .geometry import (
    ClassTolerance,
    FinslerStructure,
    GeometryError,
    divergence,
    sasaki_metric,
)
from .jets import JetDomainError, values
from .lifts import (
    BaseVectorField,
    SlitPoint,
    base_bracket,
    bracket_scale,
    complete_lift,
    horizontal_lift_field,
    lie_bracket,
    lie_form_omega,
    lie_form_theta,
    lie_metric_sasaki,
    lie_term_scale,
)
from .random_fields import random_base_field

HOLDS, FAILS, INDETERMINATE = "holds", "fails", "indeterminate"
PROPERTIES = ("projective", "affine", "conformal", "homothetic", "killing", "volume_preserving")
REPORT_VERSION = 1
SCALE_FLOOR = 1e-8
HOMOGENEITY_LAMBDA = 1.7
NUM_RANDOM_Y = 5


class SamplingError(RuntimeError):
    """Not enough admissible sample points could be drawn."""


class LatticeViolation(RuntimeError):
    """A report contradicts killing => homothetic => conformal or affine => projective."""


def verdict_for(residual: float, tol: float) -> str:
    if not np.isfinite(residual):
        return INDETERMINATE
    if residual <= tol:
        return HOLDS
    if residual >= 10 * tol:
        return FAILS
    return INDETERMINATE


def combine(*verdicts: str) -> str:
    if FAILS in verdicts:
        return FAILS
    if INDETERMINATE in verdicts:
        return INDETERMINATE
    return HOLDS


def rel(diff: float, scale: float) -> float:
    return float(diff / max(scale, SCALE_FLOOR))


# -- sampling ---------------------------------------------------------------------

Box = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SamplePlan:
    seed: int = 0
    num_base_points: int = 10
    fibre_points_per_base: int = 3
    x_box: Box | None = None
    y_box: Box | None = None
    max_attempts: int = 50

    def __post_init__(self):
        if self.fibre_points_per_base < 3:
            raise ValueError("fibre_points_per_base must be at least 3")
        if self.num_base_points < 1:
            raise ValueError("num_base_points must be at least 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        for box in (self.x_box, self.y_box):
            if box is not None and any(not (lo < hi) for lo, hi in box):
                raise ValueError(f"box intervals must satisfy lo < hi, got {box}")

    @property
    def total(self) -> int:
        return self.num_base_points * self.fibre_points_per_base

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("x_box", "y_box"):
            if d[k] is not None:
                d[k] = [list(iv) for iv in d[k]]
        return d


def _resolve_box(box: Box | None, default: Box | None, n: int, name: str) -> np.ndarray:
    b = box if box is not None else default
    if b is None:
        b = tuple((-1.0, 1.0) for _ in range(n))
    arr = np.array(b, dtype=float)
    if arr.shape != (n, 2):
        raise ValueError(f"{name} box must have {n} intervals")
    return arr


def _admissible(fs: FinslerStructure, x: np.ndarray, y: np.ndarray) -> bool:
    if np.linalg.norm(y) < 1e-6:
        return False
    if fs.safe is not None and not fs.safe(x, y):
        return False
    try:
        loc = fs.local(SlitPoint(tuple(x), tuple(y)))
        loc.g
        return bool(np.isfinite(loc.energy.value) and abs(loc.energy.value) > 1e-12)
    except (GeometryError, JetDomainError, ExprError, ZeroDivisionError, FloatingPointError):
        return False


def sample_points(fs: FinslerStructure, plan: SamplePlan) -> tuple[list[list[SlitPoint]], int]:
    """Draw base points and fibre points by rejection; returns (groups, rejected count)."""
    n = fs.dim
    rng = np.random.Generator(np.random.PCG64(plan.seed))
    xb = _resolve_box(plan.x_box, fs.x_box, n, "x")
    yb = _resolve_box(plan.y_box, fs.y_box, n, "y")
    budget = plan.max_attempts * plan.total
    rejected = 0
    groups: list[list[SlitPoint]] = []
    while len(groups) < plan.num_base_points:
        x = rng.uniform(xb[:, 0], xb[:, 1])
        fibre: list[SlitPoint] = []
        tries = 0
        while len(fibre) < plan.fibre_points_per_base and tries < plan.max_attempts:
            tries += 1
            y = rng.uniform(yb[:, 0], yb[:, 1])
            if _admissible(fs, x, y):
                fibre.append(SlitPoint(tuple(x), tuple(y)))
            else:
                rejected += 1
                if rejected > budget:
                    raise SamplingError(
                        f"rejected {rejected} candidate points before collecting "
                        f"{plan.num_base_points} x {plan.fibre_points_per_base} samples"
                    )
        if len(fibre) == plan.fibre_points_per_base:
            groups.append(fibre)
    return groups, rejected


# -- per-check bookkeeping ---------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    statement: str
    tol: float
    residuals: list[float] = field(default_factory=list)

    @property
    def max(self) -> float:
        return float(max(self.residuals)) if self.residuals else 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.residuals)) if self.residuals else 0.0

    @property
    def verdict(self) -> str:
        return verdict_for(self.max, self.tol)

    def to_dict(self) -> dict:
        return {
            "statement": self.statement,
            "verdict": self.verdict,
            "max_residual": self.max,
            "mean_residual": self.mean,
            "tol": self.tol,
            "samples": len(self.residuals),
        }


@dataclass
class DetectorResult:
    verdict: str
    checks: list[CheckResult]
    extras: dict = field(default_factory=dict)


# -- detectors ----------------------------------------------------------------------


def _flat(groups: Sequence[Sequence[SlitPoint]]) -> list[SlitPoint]:
    return [p for g in groups for p in g]


def _spray_bracket(fs: FinslerStructure, X: BaseVectorField, p: SlitPoint):
    Xc = complete_lift(X)
    W = lie_bracket(Xc, fs.spray).value(p)
    return W, bracket_scale(Xc, fs.spray, p)


def projective_test(fs, X, groups, tol: ClassTolerance) -> DetectorResult:
    """[X^c, S] = psi C with psi(x, lambda y) = lambda psi(x, y)."""
    n = fs.dim
    horiz = CheckResult("projective.horizontal", "[X^c, S] has no horizontal (x) part", tol.rel_tol)
    par = CheckResult("projective.parallel", "the fibre part of [X^c, S] is parallel to y", tol.rel_tol)
    hom = CheckResult("projective.homogeneity", "the projective factor satisfies C(psi) = psi", tol.rel_tol)
    psi_samples = []
    for p in _flat(groups):
        y = np.array(p.y)
        W, scale = _spray_bracket(fs, X, p)
        psi = float(W[n:] @ y / (y @ y))
        horiz.residuals.append(rel(np.linalg.norm(W[:n]), scale))
        par.residuals.append(rel(np.linalg.norm(W[n:] - psi * y), scale))
        q = p.with_y(HOMOGENEITY_LAMBDA * y)
        Wq, scale_q = _spray_bracket(fs, X, q)
        yq = np.array(q.y)
        psi_q = float(Wq[n:] @ yq / (yq @ yq))
        ref = scale_q / np.linalg.norm(yq) + HOMOGENEITY_LAMBDA * scale / np.linalg.norm(y)
        hom.residuals.append(rel(abs(psi_q - HOMOGENEITY_LAMBDA * psi), ref))
        psi_samples.append(psi)
    checks = [horiz, par, hom]
    return DetectorResult(combine(*(c.verdict for c in checks)), checks, {"psi_samples": psi_samples})


def _prop_34_v(fs, X, groups, tol, seed: int) -> CheckResult:
    """[X^c, Y^h] = [X, Y]^h for random quadratic Y."""
    chk = CheckResult(
        "affine.horizontal_lifts", "[X^c, Y^h] = [X, Y]^h for random fields Y", tol.rel_tol
    )
    rng = np.random.Generator(np.random.PCG64(seed))
    Ys = [random_base_field(rng, fs.dim, name=f"Y{k}") for k in range(NUM_RANDOM_Y)]
    Xc = complete_lift(X)
    for Y in Ys:
        Yh = horizontal_lift_field(fs, Y)
        lhs_field = lie_bracket(Xc, Yh)
        rhs_field = horizontal_lift_field(fs, base_bracket(X, Y))
        for p in _flat(groups):
            lhs, rhs = lhs_field.value(p), rhs_field.value(p)
            scale = bracket_scale(Xc, Yh, p) + np.linalg.norm(rhs)
            chk.residuals.append(rel(np.linalg.norm(lhs - rhs), scale))
    return chk


def affine_test(fs, X, groups, tol: ClassTolerance, seed: int = 0) -> DetectorResult:
    """[X^c, S] = 0, plus the horizontal-lift characterization when it holds."""
    chk = CheckResult("affine.spray", "[X^c, S] = 0", tol.rel_tol)
    for p in _flat(groups):
        W, scale = _spray_bracket(fs, X, p)
        chk.residuals.append(rel(np.linalg.norm(W), scale))
    checks = [chk]
    if chk.verdict == HOLDS:
        checks.append(_prop_34_v(fs, X, groups, tol, seed))
    return DetectorResult(chk.verdict, checks)


def _phi_hat(fs, X, p: SlitPoint) -> tuple[float, float, np.ndarray]:
    """phi = X^c E / E, its term scale, and its x-gradient."""
    n = fs.dim
    loc = fs.local(p)
    xc = complete_lift(X).expand(p, 1)
    E = loc.energy.truncate(1)
    dE = [d.truncate(1) for d in loc.dE]
    num = sum((a * b for a, b in zip(xc, dE)), 0.0 * E)
    phi = num / E
    terms = np.abs(values(xc) * values(dE))
    return phi.value, float(terms.sum() / abs(E.value)), phi.gradient()[:n]


def _tilde_lie_metric(fs, X, p: SlitPoint) -> tuple[np.ndarray, float]:
    """L~_{X^c} g together with the norm of its separate terms."""
    n = fs.dim
    loc = fs.local(p)
    xc = complete_lift(X).value(p)
    g = loc.g
    dg = np.array([[c.gradient() for c in row] for row in loc.g_jets])
    DX = np.array([c.gradient()[:n] for c in X.expand(p, 1)])
    transport, stretch = dg @ xc, DX.T @ g
    L = transport + stretch + stretch.T
    return L, float(np.linalg.norm(transport) + 2 * np.linalg.norm(stretch))


def conformal_data(fs, X, groups):
    out = []
    for g in groups:
        out.append([_phi_hat(fs, X, p) for p in g])
    return out


def conformal_test(fs, X, groups, tol: ClassTolerance, phis=None) -> DetectorResult:
    """phi = X^c E / E must be fibrewise constant and satisfy the tensor characterizations."""
    n = fs.dim
    phis = phis if phis is not None else conformal_data(fs, X, groups)
    spread = CheckResult(
        "conformal.fibre_constancy", "X^c E / E is constant along each fibre", tol.fibre_spread_tol
    )
    metric_chk = CheckResult("conformal.metric", "L~_{X^c} g = phi g", tol.rel_tol)
    theta_chk = CheckResult("conformal.hilbert_form", "L_{X^c} theta = phi theta", tol.rel_tol)
    omega_chk = CheckResult(
        "conformal.fundamental_form", "L_{X^c} omega = phi omega + d(phi) ^ theta", tol.rel_tol
    )
    energies = []
    for g, ph in zip(groups, phis):
        vals = [v for v, _, _ in ph]
        scale = max(s for _, s, _ in ph)
        spread.residuals.append(rel(max(vals) - min(vals), scale))
        for p, (phi, _, dphi) in zip(g, ph):
            loc = fs.local(p)
            energies.append(loc.energy.value)
            gm = loc.g
            Lg, Lg_scale = _tilde_lie_metric(fs, X, p)
            metric_chk.residuals.append(
                rel(np.linalg.norm(Lg - phi * gm), Lg_scale + abs(phi) * np.linalg.norm(gm))
            )
            xc1 = complete_lift(X).expand(p, 1)
            th = loc.theta_covector(1)
            Lth = lie_form_theta(fs, X, p)
            thv = values(th)
            th_scale = np.linalg.norm(np.array([t.gradient() for t in th]) @ values(xc1)) + np.linalg.norm(
                np.array([c.gradient() for c in xc1]).T @ thv
            )
            theta_chk.residuals.append(
                rel(np.linalg.norm(Lth - phi * thv), th_scale + abs(phi) * np.linalg.norm(thv))
            )
            Lw = lie_form_omega(fs, X, p)
            W = np.array([values(r) for r in loc.omega(0)])
            dphi_full = np.concatenate([dphi, np.zeros(n)])
            wedge = np.outer(dphi_full, thv) - np.outer(thv, dphi_full)
            w_scale = lie_term_scale(xc1, loc.omega(1))
            omega_chk.residuals.append(
                rel(
                    np.linalg.norm(Lw - phi * W - wedge),
                    w_scale + abs(phi) * np.linalg.norm(W) + np.linalg.norm(wedge),
                )
            )
    checks = [spread, metric_chk, theta_chk, omega_chk]
    verdict = combine(*(c.verdict for c in checks))
    if energies and min(energies) < 0 < max(energies):
        verdict = INDETERMINATE
    flat = [v for ph in phis for v, _, _ in ph]
    return DetectorResult(
        verdict,
        checks,
        {
            "phi_samples": flat,
            "phi_mean": float(np.mean(flat)),
            "max_fibre_spread": spread.max,
            "phi_scale": float(max(s for ph in phis for _, s, _ in ph)),
        },
    )


def homothetic_test(fs, X, groups, tol: ClassTolerance, conformal: DetectorResult | None = None) -> DetectorResult:
    """Conformal with a globally constant factor alpha."""
    conformal = conformal or conformal_test(fs, X, groups, tol)
    phis = conformal.extras["phi_samples"]
    scale = conformal.extras["phi_scale"]
    chk = CheckResult("homothetic.constancy", "X^c E / E is globally constant", tol.constancy_tol)
    chk.residuals.append(rel(max(phis) - min(phis), scale))
    alpha = float(np.mean(phis))
    return DetectorResult(combine(conformal.verdict, chk.verdict), [chk], {"alpha": alpha, "phi_scale": scale})


def killing_test(fs, X, groups, tol: ClassTolerance, homothetic: DetectorResult | None = None) -> DetectorResult:
    """Homothetic with alpha = 0."""
    homothetic = homothetic or homothetic_test(fs, X, groups, tol)
    chk = CheckResult("killing.factor", "the homothety constant vanishes", tol.rel_tol)
    chk.residuals.append(rel(abs(homothetic.extras["alpha"]), homothetic.extras["phi_scale"]))
    return DetectorResult(combine(homothetic.verdict, chk.verdict), [chk])


def _divergence_with_scale(fs, X, p: SlitPoint) -> tuple[float, float]:
    Xc = complete_lift(X)
    comps = Xc.expand(p, 1)
    rho = fs.local(p).rho(1)
    jac = np.array([c.gradient() for c in comps])
    flux = np.linalg.norm(values(comps)) * np.linalg.norm(rho.gradient()) / rho.value
    return divergence(fs, Xc, p), float(np.linalg.norm(jac) + flux)


def volume_test(fs, X, groups, tol: ClassTolerance) -> DetectorResult:
    """div X^c = 0 with respect to the Dazord volume."""
    chk = CheckResult("volume.divergence", "div X^c = 0 for the Dazord volume", tol.rel_tol)
    divs = []
    for p in _flat(groups):
        d, scale = _divergence_with_scale(fs, X, p)
        divs.append(d)
        chk.residuals.append(rel(abs(d), scale))
    return DetectorResult(chk.verdict, [chk], {"divergence_samples": divs})


# -- theorem cross-checks -------------------------------------------------------------


@dataclass
class TheoremCheck:
    name: str
    statement: str
    premises: list[str]
    applicable: bool
    tol: float
    max_residual: float | None = None

    @property
    def outcome(self) -> str:
        if not self.applicable:
            return "not_applicable"
        return "pass" if self.max_residual <= self.tol else "fail"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statement": self.statement,
            "premises": self.premises,
            "outcome": self.outcome,
            "max_residual": self.max_residual,
            "tol": self.tol,
        }


def theorem_suite(fs, X, groups, tol: ClassTolerance, results: dict[str, DetectorResult]) -> list[TheoremCheck]:
    """Check the implications between classes on the same samples.

    A failing record points at a defect in the computation, not at X.
    """
    n = fs.dim
    v = {k: r.verdict == HOLDS for k, r in results.items()}
    pts = _flat(groups)
    out: list[TheoremCheck] = []

    def record(name, statement, premises, tol_, compute):
        ok = all(v[p] for p in premises)
        out.append(TheoremCheck(name, statement, list(premises), ok, tol_, compute() if ok else None))

    def affine_residual():
        return max(rel(np.linalg.norm(W), s) for W, s in (_spray_bracket(fs, X, p) for p in pts))

    record("homothetic_implies_affine", "every homothetic field is affine", ["homothetic"], tol.rel_tol,
           affine_residual)
    record(
        "projective_conformal_implies_homothetic",
        "a projective conformal field is homothetic",
        ["projective", "conformal"],
        tol.constancy_tol,
        lambda: results["homothetic"].checks[0].max,
    )
    record("volume_projective_implies_affine", "a volume-preserving projective field is affine",
           ["volume_preserving", "projective"], tol.rel_tol, affine_residual)
    record(
        "volume_conformal_implies_killing",
        "a volume-preserving conformal field is Killing",
        ["volume_preserving", "conformal"],
        tol.rel_tol,
        lambda: results["killing"].checks[0].max,
    )

    def div_vs_phi():
        phis = results["conformal"].extras["phi_samples"]
        divs = results["volume_preserving"].extras["divergence_samples"]
        return float(max(abs(d - n * ph) for d, ph in zip(divs, phis)))

    record("divergence_of_complete_lift", "div X^c = n phi for a conformal field", ["conformal"],
           tol.fibre_spread_tol, div_vs_phi)

    def sasaki():
        phis = results["conformal"].extras["phi_samples"]
        worst = 0.0
        for p, ph in zip(pts, phis):
            Gs = sasaki_metric(fs, p)
            L = lie_metric_sasaki(fs, X, p)
            scale = lie_term_scale(complete_lift(X).expand(p, 1), fs.local(p).sasaki(1))
            worst = max(worst, rel(np.linalg.norm(L - ph * Gs), scale + abs(ph) * np.linalg.norm(Gs)))
        return worst

    record("affine_conformal_sasaki", "an affine conformal field is conformal for the Sasaki metric",
           ["affine", "conformal"], tol.fibre_spread_tol, sasaki)
    return out


# -- the report ------------------------------------------------------------------------


def check_lattice(verdicts: dict[str, str]) -> None:
    pairs = [("killing", "homothetic"), ("homothetic", "conformal"), ("killing", "conformal"), ("affine", "projective")]
    for strong, weak in pairs:
        if verdicts[strong] == HOLDS and verdicts[weak] != HOLDS:
            raise LatticeViolation(f"{strong} holds but {weak} is {verdicts[weak]}")


@dataclass
class ClassificationReport:
    config: dict
    verdicts: dict[str, str]
    factors: dict
    checks: dict[str, dict]
    theorem_checks: list[dict]
    sampling: dict
    timestamp: str = ""

    def __post_init__(self):
        check_lattice(self.verdicts)

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "artifact_version": __version__,
            "command": "classify",
            "timestamp": self.timestamp,
            "semantics": "verdicts state consistency with each property at every sampled slit point",
            "config": self.config,
            "verdicts": self.verdicts,
            "factors": self.factors,
            "checks": self.checks,
            "theorem_checks": self.theorem_checks,
            "sampling": self.sampling,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)


def classify(
    fs: FinslerStructure,
    X: BaseVectorField,
    plan: SamplePlan = SamplePlan(),
    tol: ClassTolerance = ClassTolerance(),
    config: dict | None = None,
    clock: Callable[[], str] | None = None,
) -> ClassificationReport:
    """Run every detector and the theorem suite on one sample set."""
    groups, rejected = sample_points(fs, plan)
    results: dict[str, DetectorResult] = {}
    results["projective"] = projective_test(fs, X, groups, tol)
    results["affine"] = affine_test(fs, X, groups, tol, seed=plan.seed + 1)
    results["conformal"] = conformal_test(fs, X, groups, tol)
    results["homothetic"] = homothetic_test(fs, X, groups, tol, results["conformal"])
    results["killing"] = killing_test(fs, X, groups, tol, results["homothetic"])
    results["volume_preserving"] = volume_test(fs, X, groups, tol)
    verdicts = {k: results[k].verdict for k in PROPERTIES}
    theorems = theorem_suite(fs, X, groups, tol, results)

    conf = results["conformal"].extras
    factors = {
        "conformal": {
            "samples": conf["phi_samples"],
            "mean": conf["phi_mean"],
            "max_fibre_spread": conf["max_fibre_spread"],
        },
        "homothety_alpha": results["homothetic"].extras["alpha"] if verdicts["homothetic"] == HOLDS else None,
        "projective": {"samples": results["projective"].extras["psi_samples"]},
        "divergence": {"samples": results["volume_preserving"].extras["divergence_samples"]},
    }
    checks = {c.name: c.to_dict() for r in results.values() for c in r.checks}
    cfg = dict(config or {})
    cfg.setdefault("finsler", fs.source or fs.name)
    cfg.setdefault("field", X.source or X.name)
    cfg.setdefault("dim", fs.dim)
    cfg["plan"] = plan.to_dict()
    cfg["tolerances"] = asdict(tol)
    stamp = (clock or (lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")))()
    return ClassificationReport(
        config=cfg,
        verdicts=verdicts,
        factors=factors,
        checks=checks,
        theorem_checks=[t.to_dict() for t in theorems],
        sampling={
            "points": [{"x": list(p.x), "y": list(p.y)} for p in _flat(groups)],
            "base_points": len(groups),
            "fibre_points": plan.fibre_points_per_base,
            "rejected": rejected,
        },
        timestamp=stamp,
    )
