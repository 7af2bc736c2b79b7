import itertools

import numpy as np
import pytest
import sympy as sp

from conftest import slit
from finsym.classify import SamplePlan, sample_points
from finsym.geometry import connection, metric
from finsym.models import (
    FIELDS,
    GROUND_TRUTH,
    MODELS,
    PROPERTIES,
    SpecError,
    builtin_field,
    builtin_finsler,
    field_from_spec,
    finsler_from_spec,
    parse_spec,
)

ALL = [(m, n) for n in (2, 3) for m in MODELS if not (m == "polar" and n == 3)]


def _points(fs, count, seed=0):
    groups, _ = sample_points(fs, SamplePlan(seed=seed, num_base_points=-(-count // 3)))
    return list(itertools.chain.from_iterable(groups))[:count]


# -- spec strings -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "spec,expected",
    [
        ("builtin:euclidean", ("builtin", "euclidean", {})),
        ("builtin:randers?b=0.3,0", ("builtin", "randers", {"b": "0.3,0"})),
        ("builtin:rotation?i=1,j=3", ("builtin", "rotation", {"i": "1", "j": "3"})),
        ("builtin:linear?A=[[1,0],[0,2]]", ("builtin", "linear", {"A": "[[1,0],[0,2]]"})),
        ("builtin:riemannian?n=3", ("builtin", "riemannian", {"n": "3"})),
        ("expr:sqrt(y1^2+y2^2)", ("expr", "sqrt(y1^2+y2^2)", {})),
        (" BUILTIN:Polar ", ("builtin", "polar", {})),
    ],
)
def test_parse_spec(spec, expected):
    assert parse_spec(spec) == expected


@pytest.mark.parametrize(
    "spec",
    ["euclidean", "file:x", "builtin:", "expr:", "builtin:randers?=1", "builtin:randers?b=1,b=2", "builtin:x?1"],
)
def test_parse_spec_errors(spec):
    with pytest.raises(SpecError):
        parse_spec(spec)


@pytest.mark.parametrize(
    "spec,dim",
    [
        ("builtin:nope", 2),
        ("builtin:randers?b=1.2,0", 2),
        ("builtin:randers?b=0.6,0.8", 2),
        ("builtin:randers?b=0.1", 2),
        ("builtin:polar", 3),
        ("builtin:euclidean?n=3", 2),
        ("builtin:euclidean?bogus=1", 2),
        ("builtin:riemannian?metric=[[1,x1],[0,1]]", 2),
        ("builtin:riemannian?metric=[[1,y1],[y1,1]]", 2),
        ("expr:sqrt(y1^2+y2^2)", None),
        ("expr:sqrt(y1^2+", 2),
        ("builtin:euclidean?n=1", None),
    ],
)
def test_finsler_spec_errors(spec, dim):
    with pytest.raises(SpecError):
        finsler_from_spec(spec, dim)


@pytest.mark.parametrize(
    "spec,dim",
    [
        ("builtin:nope", 2),
        ("builtin:rotation?i=1,j=1", 2),
        ("builtin:rotation?i=1,j=3", 2),
        ("builtin:translation?v=1,2,3", 2),
        ("builtin:linear", 2),
        ("builtin:linear?A=[[1,0]]", 2),
        ("builtin:radial?x=1", 2),
        ("expr:[x1, y1]", 2),
        ("expr:[x1]", 2),
    ],
)
def test_field_spec_errors(spec, dim):
    with pytest.raises(SpecError):
        field_from_spec(spec, dim)


def test_dimension_inferred_from_params():
    assert finsler_from_spec("builtin:euclidean?n=3").dim == 3
    assert finsler_from_spec("builtin:randers?b=0.1,0.2,0.3", 3).dim == 3


# -- the registries ------------------------------------------------------------------------


def test_registry_contents():
    assert set(MODELS) == {"euclidean", "riemannian", "polar", "randers", "quartic"}
    assert {"translation", "rotation", "radial", "linear", "expr", "projective_quadratic"} <= set(FIELDS)
    with pytest.raises(TypeError):
        MODELS["x"] = None  # type: ignore[index]


@pytest.mark.parametrize("model,n", ALL)
def test_model_invariants_on_safe_box(model, n):
    fs = builtin_finsler(model, {}, n)
    for p in _points(fs, 30, seed=n):
        loc = fs.local(p)
        y = np.array(p.y)
        E = loc.energy.value
        CE = float(np.array([d.value for d in loc.dE[n:]]) @ y)
        assert abs(CE - 2 * E) <= 1e-9 * abs(2 * E)
        assert abs(np.linalg.det(metric(fs, p))) > 1e-8


def test_euclidean_metric_identity():
    fs = builtin_finsler("euclidean", {}, 2)
    for p in _points(fs, 5):
        assert np.allclose(metric(fs, p), np.eye(2))


def test_randers_spray_vanishes():
    fs = builtin_finsler("randers", {"b": "0.3,0"}, 2)
    for p in _points(fs, 5):
        assert np.allclose(connection(fs, p).G, 0.0, atol=1e-14)


def test_quartic_is_not_riemannian():
    # a Riemannian g would not depend on the fibre direction
    fs = builtin_finsler("quartic", {}, 2)
    g1 = metric(fs, slit((0, 0), (1.0, 0.5)))
    g2 = metric(fs, slit((0, 0), (0.5, 1.0)))
    assert not np.allclose(g1, g2)


@pytest.mark.parametrize(
    "name,params,n,x,expected",
    [
        ("translation", {"v": "1,0.5"}, 2, (0.3, 0.4), (1.0, 0.5)),
        ("rotation", {}, 2, (0.3, 0.4), (-0.4, 0.3)),
        ("rotation", {"i": "1", "j": "3"}, 3, (0.3, 0.4, 0.5), (-0.5, 0.0, 0.3)),
        ("radial", {}, 3, (0.3, 0.4, 0.5), (0.3, 0.4, 0.5)),
        ("linear", {"A": "[[1,2],[3,-4]]"}, 2, (1.0, 1.0), (3.0, -1.0)),
        ("projective_quadratic", {}, 3, (2.0, 3.0, 4.0), (4.0, 6.0, 8.0)),
        ("special_conformal", {}, 2, (1.0, 2.0), (2 * 1 * 1 - 5, 2 * 1 * 2)),
        ("expr", {"source": "[x1*x2, sin(x1)]"}, 2, (0.5, 2.0), (1.0, np.sin(0.5))),
    ],
)
def test_builtin_field_values(name, params, n, x, expected):
    assert np.allclose(builtin_field(name, params, n).value(x), expected)


def test_expr_field_keeps_pretty_source():
    X = field_from_spec("expr:[x1^2,x1*x2]", 2)
    assert X.source == "[x1^2, x1 * x2]"


# -- ground truth ----------------------------------------------------------------------------


def test_ground_truth_well_formed():
    assert len(GROUND_TRUTH) >= 10
    for gt in GROUND_TRUTH:
        assert set(gt.expected) == set(PROPERTIES)
        assert gt.provenance.split(":")[0] in {"trivial", "derived"}
        finsler_from_spec(gt.finsler, gt.dim)
        field_from_spec(gt.field, gt.dim)
        # the implication lattice holds in the expectations themselves
        e = gt.expected
        assert not e["killing"] or e["homothetic"]
        assert not e["homothetic"] or e["conformal"]
        assert not e["affine"] or e["projective"]
        if e["homothetic"]:
            assert gt.alpha is not None


# -- Riemannian spray against Christoffel symbols ---------------------------------------------


def _christoffel_G(rows, n):
    xs = sp.symbols(f"x1:{n + 1}")
    ys = sp.symbols(f"y1:{n + 1}")
    a = sp.Matrix(n, n, lambda i, j: sp.sympify(rows[i][j], locals=dict(zip(map(str, xs), xs))))
    ainv = a.inv()
    G = [
        sum(
            ainv[i, l] * (sp.diff(a[l, k], xs[j]) + sp.diff(a[l, j], xs[k]) - sp.diff(a[j, k], xs[l])) / 2 * ys[j] * ys[k]
            for j, k, l in itertools.product(range(n), repeat=3)
        )
        / 2
        for i in range(n)
    ]
    return sp.lambdify((xs, ys), G, "numpy")


def test_riemannian_spray_matches_christoffel():
    rows = [["exp(x1)", "x1*x2/4"], ["x1*x2/4", "1 + sin(x2)^2"]]
    fs = builtin_finsler("riemannian", {"metric": "[[exp(x1), x1*x2/4], [x1*x2/4, 1 + sin(x2)^2]]"}, 2)
    oracle = _christoffel_G(rows, 2)
    for p in _points(fs, 50, seed=21):
        G = connection(fs, p).G
        ref = np.array(oracle(np.array(p.x), np.array(p.y)), dtype=float)
        assert np.linalg.norm(G - ref) <= 1e-8 * np.linalg.norm(ref)
