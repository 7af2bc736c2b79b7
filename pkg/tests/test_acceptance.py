"""Acceptance criteria, one test per criterion.

A line per criterion is printed in the terminal summary.
"""

import itertools
import json
from functools import lru_cache

import numpy as np
import pytest
import sympy as sp

from expr_corpus import CORPUS, POINT
from finsym.classify import HOLDS, SamplePlan, classify, conformal_test, sample_points
from finsym.cli import RunConfig, cmd_classify
from finsym.exprlang import evaluate, evaluate_value, parse
from finsym.geometry import ClassTolerance, connection, divergence
from finsym.identities import lemma_commutator_residual, lemma_intertwining_residual, run_identities
from finsym.jets import JetPoint, finite_difference_oracle, partial
from finsym.lifts import liouville, tilde_lie
from finsym.models import GROUND_TRUTH, builtin_finsler, field_from_spec, finsler_from_spec
from finsym.random_fields import random_base_field, random_projectable, random_section, random_tm_field

MODELS = ("euclidean", "riemannian", "polar", "randers", "quartic")
CORPUS_SEED = 3

criterion = pytest.mark.criterion


def _models_in(n):
    return [m for m in MODELS if not (m == "polar" and n != 2)]


@lru_cache(maxsize=None)
def _classified(index: int):
    gt = GROUND_TRUTH[index]
    fs = finsler_from_spec(gt.finsler, gt.dim)
    X = field_from_spec(gt.field, gt.dim)
    report = classify(fs, X, SamplePlan(seed=CORPUS_SEED), clock=lambda: "")
    return gt, fs, X, report


def _all_classified():
    return [_classified(i) for i in range(len(GROUND_TRUTH))]


# -- 1 --------------------------------------------------------------------------------

CRITERION_1_IDENTITIES = (
    "spray_second_order",
    "spray_homogeneity",
    "tension",
    "torsion",
    "horizontal_compatibility",
    "metric_on_delta",
    "omega_c_s",
    "vertical_derivative_delta",
    "tilde_lie_delta",
    "omega_vs_metric",
)


@criterion(1, "identity suite on all five builtin models, 1e-8 relative at 100 samples")
def test_criterion_1_identity_suite():
    plan = SamplePlan(seed=1, num_base_points=34, fibre_points_per_base=3)
    failures = []
    for model in MODELS:
        fs = builtin_finsler(model, {}, 2)
        results = run_identities(fs, plan, tol=1e-8, names=CRITERION_1_IDENTITIES)
        assert {r.name for r in results} == set(CRITERION_1_IDENTITIES)
        for r in results:
            assert len(r.residuals) >= 100
            if r.max_residual > 1e-8:
                failures.append((model, r.name, r.max_residual))
    assert not failures, failures


# -- 2 --------------------------------------------------------------------------------


@criterion(2, "div C = n and div S = 0 within 1e-7 absolute, n = 2 and 3")
def test_criterion_2_divergence_facts():
    plan = SamplePlan(seed=2, num_base_points=8, fibre_points_per_base=3)
    worst_c, worst_s = 0.0, 0.0
    for n in (2, 3):
        for model in _models_in(n):
            fs = builtin_finsler(model, {}, n)
            C = liouville(n)
            groups, _ = sample_points(fs, plan)
            for p in itertools.chain.from_iterable(groups):
                worst_c = max(worst_c, abs(divergence(fs, C, p) - n))
                worst_s = max(worst_s, abs(divergence(fs, fs.spray, p)))
    assert worst_c <= 1e-7, worst_c
    assert worst_s <= 1e-7, worst_s


# -- 3 --------------------------------------------------------------------------------


def _expected_verdicts(gt):
    return {k: (HOLDS if v else "fails") for k, v in gt.expected.items()}


@criterion(3, "ground-truth corpus reproduces verdicts and forced factors")
def test_criterion_3_ground_truth():
    assert len(GROUND_TRUTH) >= 10
    kinds = {(gt.finsler.split("?")[0], gt.field.split("?")[0]) for gt in GROUND_TRUTH}
    for required in [
        ("builtin:euclidean", "builtin:radial"),
        ("builtin:euclidean", "builtin:rotation"),
        ("builtin:randers", "builtin:translation"),
        ("builtin:euclidean", "builtin:projective_quadratic"),
        ("builtin:euclidean", "builtin:linear"),
    ]:
        assert required in kinds
    for gt, fs, X, report in _all_classified():
        assert report.verdicts == _expected_verdicts(gt), gt.label
        pts = report.sampling["points"]
        if gt.alpha is not None:
            assert report.factors["homothety_alpha"] == pytest.approx(gt.alpha, abs=1e-7), gt.label
        if gt.phi is not None:
            for pt, phi in zip(pts, report.factors["conformal"]["samples"]):
                assert phi == pytest.approx(gt.phi(pt["x"], pt["y"]), abs=1e-7), gt.label
        if gt.psi is not None:
            for pt, psi in zip(pts, report.factors["projective"]["samples"]):
                assert abs(psi - gt.psi(pt["x"], pt["y"])) <= 1e-7, gt.label
        if gt.divergence is not None:
            for pt, d in zip(pts, report.factors["divergence"]["samples"]):
                assert d == pytest.approx(gt.divergence(pt["x"], pt["y"]), rel=1e-7, abs=1e-7), gt.label


# -- 4 --------------------------------------------------------------------------------

THEOREM_TOLERANCES = {
    "homothetic_implies_affine": 1e-7,
    "projective_conformal_implies_homothetic": 1e-6,
    "volume_projective_implies_affine": 1e-7,
    "volume_conformal_implies_killing": 1e-7,
    "divergence_of_complete_lift": 1e-6,
    "affine_conformal_sasaki": 1e-6,
}


@criterion(4, "theorem suite conclusions hold wherever the premises hold")
def test_criterion_4_theorem_suite():
    applicable = {name: 0 for name in THEOREM_TOLERANCES}
    for gt, fs, X, report in _all_classified():
        for t in report.theorem_checks:
            if t["outcome"] == "not_applicable":
                continue
            applicable[t["name"]] += 1
            assert t["outcome"] == "pass", (gt.label, t)
            assert t["max_residual"] <= THEOREM_TOLERANCES[t["name"]], (gt.label, t)
    # every implication is exercised by at least one corpus entry
    assert all(applicable.values()), applicable


# -- 5 --------------------------------------------------------------------------------


@criterion(5, "conformal items (i), (ii), (iii) agree on every corpus entry")
def test_criterion_5_equivalence():
    tol = ClassTolerance()
    seen_conformal = seen_not = 0
    for gt, fs, X, _ in _all_classified():
        groups, _ = sample_points(fs, SamplePlan(seed=CORPUS_SEED))
        res = conformal_test(fs, X, groups, tol)
        checks = {c.name: c for c in res.checks}
        items = [checks["conformal.metric"], checks["conformal.fibre_constancy"], checks["conformal.hilbert_form"]]
        if gt.expected["conformal"]:
            seen_conformal += 1
            assert all(c.max <= 1e-6 for c in items), (gt.label, [c.max for c in items])
        else:
            seen_not += 1
            assert all(c.verdict == "fails" for c in items), (gt.label, [c.max for c in items])
    assert seen_conformal and seen_not


# -- 6 --------------------------------------------------------------------------------


@criterion(6, "[X^c, Y^h] = [X, Y]^h for 5 random Y on every affine entry")
def test_criterion_6_horizontal_lifts():
    count = 0
    for gt, fs, X, report in _all_classified():
        if not gt.expected["affine"]:
            continue
        chk = report.checks["affine.horizontal_lifts"]
        assert chk["samples"] == 5 * len(report.sampling["points"])
        assert chk["max_residual"] <= 1e-7, (gt.label, chk["max_residual"])
        count += 1
    assert count >= 5


# -- 7 --------------------------------------------------------------------------------


@criterion(7, "commutator and j-intertwining laws on 20 random pairs; L~ connection-free")
def test_criterion_7_operator_laws():
    worst_comm = worst_int = worst_free = 0.0
    for model in MODELS:
        fs = builtin_finsler(model, {}, 2)
        other = builtin_finsler("randers", {"b": "0.5,-0.25"}, 2)
        rng = np.random.Generator(np.random.PCG64(70 + MODELS.index(model)))
        groups, _ = sample_points(fs, SamplePlan(seed=7, num_base_points=4, fibre_points_per_base=3))
        pts = list(itertools.chain.from_iterable(groups))
        for k in range(20):
            p = pts[k % len(pts)]
            xi, eta = random_projectable(rng, 2, "xi"), random_projectable(rng, 2, "eta")
            s = random_section(rng, 2)
            worst_comm = max(worst_comm, lemma_commutator_residual(fs, xi, eta, s, p))
            X, zeta = random_base_field(rng, 2), random_tm_field(rng, 2)
            worst_int = max(worst_int, lemma_intertwining_residual(fs, X, zeta, p))
            a = tilde_lie(fs, xi, s).value(p)
            b = tilde_lie(other, xi, s).value(p)
            worst_free = max(worst_free, np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300))
    assert worst_comm <= 1e-8, worst_comm
    assert worst_int <= 1e-8, worst_int
    assert worst_free <= 1e-12, worst_free


# -- 8 --------------------------------------------------------------------------------


def _multi_indices(m, max_order):
    for total in range(1, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(m), total):
            yield tuple(combo.count(i) for i in range(m))


def _christoffel_spray(metric_rows, n):
    """G^i = 1/2 Gamma^i_jk y^j y^k from the metric matrix, via sympy."""
    xs = sp.symbols(f"x1:{n + 1}")
    ys = sp.symbols(f"y1:{n + 1}")
    a = sp.Matrix(n, n, lambda i, j: sp.sympify(metric_rows[i][j], locals=dict(zip(map(str, xs), xs))))
    ainv = a.inv()
    G = []
    for i in range(n):
        expr = 0
        for j, k, l in itertools.product(range(n), repeat=3):
            gamma = ainv[i, l] * (sp.diff(a[l, k], xs[j]) + sp.diff(a[l, j], xs[k]) - sp.diff(a[j, k], xs[l])) / 2
            expr += gamma * ys[j] * ys[k]
        G.append(expr / 2)
    return sp.lambdify((xs, ys), G, "numpy")


RIEMANNIAN_CASES = (
    (2, None, [["1/x2**2", "0"], ["0", "1/x2**2"]]),
    (3, None, [["1/x3**2", "0", "0"], ["0", "1/x3**2", "0"], ["0", "0", "1/x3**2"]]),
    (2, "[[1+x1^2, 0.5*x2], [0.5*x2, 2+x2^2]]", [["1+x1**2", "0.5*x2"], ["0.5*x2", "2+x2**2"]]),
    (
        3,
        "[[2+x2^2, x1*x3, 0], [x1*x3, 3, 0.2*x1], [0, 0.2*x1, 1+x3^2]]",
        [["2+x2**2", "x1*x3", "0"], ["x1*x3", "3", "0.2*x1"], ["0", "0.2*x1", "1+x3**2"]],
    ),
)


@criterion(8, "jets vs finite differences on 30 expressions; Riemannian spray vs Christoffel oracle")
def test_criterion_8_numerical_spine():
    assert len(CORPUS) >= 30
    worst = 0.0
    jp = JetPoint(POINT, ("x", "x", "y", "y"))
    for src in CORPUS:
        node = parse(src, 2)
        jet = evaluate(node, jp, 3)

        def f(z):
            return evaluate_value(node, z[:2], z[2:])

        for mi in _multi_indices(4, 3):
            exact = partial(jet, mi)
            approx = finite_difference_oracle(f, POINT, mi, step=2e-2)
            err = abs(exact - approx) / max(abs(exact), 1.0)
            worst = max(worst, err)
            assert err <= 1e-5, (src, mi, exact, approx)

    for n, metric, rows in RIEMANNIAN_CASES:
        params = {} if metric is None else {"metric": metric}
        fs = builtin_finsler("riemannian", params, n)
        oracle = _christoffel_spray(rows, n)
        groups, _ = sample_points(fs, SamplePlan(seed=8 + n, num_base_points=17, fibre_points_per_base=3))
        pts = list(itertools.chain.from_iterable(groups))[:50]
        assert len(pts) == 50
        for p in pts:
            G = connection(fs, p).G
            ref = np.array(oracle(np.array(p.x), np.array(p.y)), dtype=float)
            assert np.linalg.norm(G - ref) <= 1e-8 * max(np.linalg.norm(ref), 1e-300), (metric, p, G, ref)


# -- 9 --------------------------------------------------------------------------------


@criterion(9, "two classify runs with one config give byte-identical reports")
def test_criterion_9_determinism(tmp_path):
    out = tmp_path / "report.json"
    raw = []
    for k in range(2):
        cfg = RunConfig(
            command="classify",
            finsler="builtin:randers?b=0.3,0",
            field="builtin:radial",
            dim=2,
            seed=5,
            out=str(out),
        )
        cfg.extra["clock"] = lambda k=k: f"2000-01-0{k + 1}T00:00:00+00:00"
        assert cmd_classify(cfg) == 0
        raw.append(out.read_bytes())
    stamps = [json.loads(r)["timestamp"] for r in raw]
    assert stamps[0] != stamps[1]
    a, b = (b"\n".join(line for line in r.split(b"\n") if b'"timestamp"' not in line) for r in raw)
    assert a == b
