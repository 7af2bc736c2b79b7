import itertools

import numpy as np
import pytest

from conftest import slit
from finsym.classify import SamplePlan, sample_points
from finsym.geometry import fundamental_form, hilbert_form, metric, sasaki_metric
from finsym.jets import finite_difference_oracle, values
from finsym.lifts import (
    BaseVectorField,
    NotProjectableError,
    Section,
    SlitPoint,
    TMVectorField,
    J_map,
    apply_field,
    base_bracket,
    basic_section,
    bracket,
    canonical_delta,
    complete_lift,
    complete_lift_function,
    constant_field,
    horizontal_lift,
    horizontal_lift_field,
    i_map,
    is_projectable,
    j_map,
    lie_bracket,
    lie_form_omega,
    lie_form_theta,
    lie_metric_sasaki,
    liouville,
    tilde_lie,
    tilde_lie_metric,
    tilde_lie_section,
    vertical_lift,
    vertical_lift_function,
    vertical_map,
    zero_field,
)
from finsym.models import builtin_field, builtin_finsler
from finsym.random_fields import random_base_field, random_section, random_tm_field

N = 2


def _points(fs, count=6, seed=0):
    groups, _ = sample_points(fs, SamplePlan(seed=seed, num_base_points=-(-count // 3)))
    return list(itertools.chain.from_iterable(groups))[:count]


def _close(a, b, rel=1e-10):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) <= rel * max(np.linalg.norm(a), np.linalg.norm(b), 1.0)


@pytest.fixture
def fields(rng):
    X = random_base_field(rng, N, name="X")
    Y = random_base_field(rng, N, name="Y")
    return X, Y


P = slit((0.4, -0.7), (0.9, 0.3))


# -- lifts and brackets ---------------------------------------------------------------


def test_lift_components():
    X = builtin_field("linear", {"A": "[[1, 2], [3, 4]]"}, N)
    p = slit((1.0, 2.0), (0.5, -1.0))
    assert np.allclose(vertical_lift(X).value(p), [0, 0, 5, 11])
    # X^c = X^i d/dx^i + y^j dX^i/dx^j d/dy^i
    assert np.allclose(complete_lift(X).value(p), [5, 11, -1.5, -2.5])
    assert np.allclose(liouville(N).value(p), [0, 0, 0.5, -1.0])
    assert np.allclose(canonical_delta(N).value(p), [0.5, -1.0])


def test_bracket_rules(fields):
    X, Y = fields
    XY = base_bracket(X, Y)
    C = liouville(N)
    Xv, Yv, Xc, Yc = vertical_lift(X), vertical_lift(Y), complete_lift(X), complete_lift(Y)
    assert _close(bracket(Xv, Yv, P), 0.0)
    assert _close(bracket(Xc, Yv, P), vertical_lift(XY).value(P))
    assert _close(bracket(Xc, Yc, P), complete_lift(XY).value(P))
    assert _close(bracket(C, Xv, P), -Xv.value(P))
    assert _close(bracket(C, Xc, P), 0.0)


def test_bracket_antisymmetry_and_jacobi(rng):
    a, b, c = (random_tm_field(rng, N) for _ in range(3))
    assert _close(bracket(a, b, P), -bracket(b, a, P))
    total = (
        bracket(a, lie_bracket(b, c), P) + bracket(b, lie_bracket(c, a), P) + bracket(c, lie_bracket(a, b), P)
    )
    assert np.linalg.norm(total) <= 1e-12 * 10


def test_base_bracket_rotation_translation():
    R = builtin_field("rotation", {}, N)
    T = constant_field([1.0, 0.0])
    # [R, d/dx1] = -d(R)/dx1 = (0, -1) for R = (-x2, x1)
    assert np.allclose(base_bracket(R, T).value((0.3, 0.2)), [0.0, -1.0])


def test_maps(fields, rng):
    X, _ = fields
    xi = random_tm_field(rng, N)
    s = random_section(rng, N)
    assert np.allclose(j_map(xi).value(P), xi.value(P)[:N])
    assert np.allclose(i_map(s).value(P), np.concatenate([[0, 0], s.value(P)]))
    assert np.allclose(J_map(xi).value(P), np.concatenate([[0, 0], xi.value(P)[:N]]))
    assert np.allclose(J_map(J_map(xi)).value(P), 0.0)
    assert np.allclose(basic_section(X).value(P), X.value(P.x))
    assert np.allclose(j_map(complete_lift(X)).value(P), X.value(P.x))


def test_function_lifts(fields):
    X, _ = fields

    def f(xs):
        return xs[0] * xs[0] * xs[1] + xs[1]

    fv, fc = vertical_lift_function(N, f), complete_lift_function(N, f)
    x1, x2 = P.x
    y1, y2 = P.y
    assert fv.value(P) == pytest.approx(x1 * x1 * x2 + x2)
    assert fc.value(P) == pytest.approx(y1 * 2 * x1 * x2 + y2 * (x1 * x1 + 1))
    assert apply_field(liouville(N), fc).value(P) == pytest.approx(fc.value(P))
    assert apply_field(vertical_lift(X), fv).value(P) == pytest.approx(0.0, abs=1e-15)


# -- connection-induced operators -----------------------------------------------------


@pytest.mark.parametrize("model", ["polar", "randers", "riemannian"])
def test_horizontal_and_vertical(model, fields):
    fs = builtin_finsler(model, {}, N)
    X, _ = fields
    for p in _points(fs, 3):
        h = horizontal_lift(fs, X, p)
        assert np.allclose(h[:N], X.value(p.x))
        assert np.allclose(vertical_map(fs, horizontal_lift_field(fs, X), p), 0.0, atol=1e-12)
        assert np.allclose(vertical_map(fs, vertical_lift(X), p), X.value(p.x))


def test_projectability_checks(rng):
    fs = builtin_finsler("randers", {}, N)
    xi = random_tm_field(rng, N)
    s = random_section(rng, N)
    assert not is_projectable(xi, P)
    with pytest.raises(NotProjectableError):
        tilde_lie_section(fs, xi, s, P)
    flagged = complete_lift(random_base_field(rng, N))
    unflagged = TMVectorField(N, flagged.expand)
    assert is_projectable(flagged, P) and is_projectable(unflagged, P)
    assert np.all(np.isfinite(tilde_lie_section(fs, unflagged, s, P)))


def test_tilde_lie_on_basic_sections(fields):
    fs = builtin_finsler("polar", {}, N)
    X, Y = fields
    p = slit((1.2, 0.1), (0.4, 0.8))
    lhs = tilde_lie_section(fs, complete_lift(X), basic_section(Y), p)
    assert _close(lhs, base_bracket(X, Y).value(p.x))
    assert _close(tilde_lie_section(fs, complete_lift(X), canonical_delta(N), p), 0.0)


def test_tilde_lie_vertical_field(fields, rng):
    fs = builtin_finsler("quartic", {}, N)
    X, _ = fields
    s = random_section(rng, N)
    p = slit((0.3, 0.2), (0.7, -0.5))
    # along a vertical lift L~ acts as the fibre derivative X^v(s)
    jets = s.expand(p, 1)
    ref = np.array([c.gradient()[N:] @ X.value(p.x) for c in jets])
    assert _close(tilde_lie_section(fs, vertical_lift(X), s, p), ref)


# -- tensor Lie derivatives -----------------------------------------------------------


def _expm(A):
    out, term = np.eye(len(A)), np.eye(len(A))
    for k in range(1, 30):
        term = term @ A / k
        out = out + term
    return out


def _pullback(tensor, flow, p: SlitPoint, t: float):
    """(phi_t^* T)_p for a linear flow phi_t(z) = M(t) z on TM."""
    M = flow(t)
    z = M @ np.array(p.x + p.y)
    q = SlitPoint(tuple(z[:N]), tuple(z[N:]))
    T = tensor(q)
    return M.T @ T @ M if T.ndim == 2 else T @ M


def _flow_derivative(tensor, flow, p, h=1e-3):
    shape = np.shape(tensor(p))
    out = np.zeros(shape)
    for idx in np.ndindex(*shape):
        out[idx] = finite_difference_oracle(lambda t: _pullback(tensor, flow, p, t[0])[idx], [0.0], [1], h)
    return out


LINEAR = {
    "radial": np.eye(N),
    "rotation": np.array([[0.0, -1.0], [1.0, 0.0]]),
    "diag": np.diag([1.0, 2.0]),
    "shear": np.array([[0.5, 1.0], [-0.3, 0.2]]),
}


def _linear_field(A):
    return builtin_field("linear", {"A": "[[" + "], [".join(", ".join(map(str, r)) for r in A) + "]]"}, N)


def _complete_flow(A):
    # the flow of X^c for X = A x acts as e^{tA} on x and on y
    return lambda t: np.kron(np.eye(2), _expm(t * A))


@pytest.mark.parametrize("model", ["randers", "polar", "riemannian", "quartic"])
@pytest.mark.parametrize("name", sorted(LINEAR))
def test_lie_derivatives_match_flow_pullback(model, name):
    fs = builtin_finsler(model, {}, N)
    A = LINEAR[name]
    X = _linear_field(A)
    flow = _complete_flow(A)
    # a base point well inside every model's domain, so the short flow stays there
    p = slit((1.2, 1.3), (0.7, -0.4))
    for tensor, ours, rel in [
        (lambda q: fundamental_form(fs, q), lie_form_omega(fs, X, p), 1e-6),
        (lambda q: sasaki_metric(fs, q), lie_metric_sasaki(fs, X, p), 1e-6),
        (lambda q: np.concatenate([hilbert_form(fs, q), np.zeros(N)]), lie_form_theta(fs, X, p), 1e-6),
    ]:
        ref = _flow_derivative(tensor, flow, p)
        assert np.linalg.norm(ours - ref) <= rel * max(np.linalg.norm(ref), 1.0), (name, ours, ref)


@pytest.mark.parametrize("model", ["euclidean", "randers", "polar", "quartic"])
def test_liouville_scales_omega_by_flow(model):
    fs = builtin_finsler(model, {}, N)
    p = slit((1.1, 0.2), (0.6, -0.8))

    def flow(t):
        return np.diag([1.0] * N + [np.exp(t)] * N)

    ref = _flow_derivative(lambda q: fundamental_form(fs, q), flow, p)
    assert np.linalg.norm(ref - fundamental_form(fs, p)) <= 1e-7 * np.linalg.norm(ref)


@pytest.mark.parametrize("model", ["randers", "polar", "quartic", "riemannian"])
def test_tilde_lie_metric_product_rule(model, rng):
    """X^c(g(s, t)) = (L~g)(s, t) + g(L~s, t) + g(s, L~t)."""
    fs = builtin_finsler(model, {}, N)
    X = random_base_field(rng, N)
    Xc = complete_lift(X)
    s, t = random_section(rng, N), random_section(rng, N)
    for p in _points(fs, 4, seed=9):
        loc = fs.local(p)
        gj = [[c.truncate(1) for c in row] for row in loc.g_jets]
        sj, tj = s.expand(p, 1), t.expand(p, 1)
        f = sum(gj[i][j] * sj[i] * tj[j] for i in range(N) for j in range(N))
        lhs = values(Xc.expand(p, 0)) @ f.gradient()
        g = metric(fs, p)
        sv, tv = s.value(p), t.value(p)
        Ls, Lt = tilde_lie_section(fs, Xc, s, p), tilde_lie_section(fs, Xc, t, p)
        rhs = sv @ tilde_lie_metric(fs, X, p) @ tv + Ls @ g @ tv + sv @ g @ Lt
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_tilde_lie_metric_killing_and_homothetic():
    fs = builtin_finsler("euclidean", {}, N)
    p = slit((0.2, 0.5), (1.0, -0.3))
    assert np.allclose(tilde_lie_metric(fs, builtin_field("rotation", {}, N), p), 0.0, atol=1e-14)
    assert np.allclose(tilde_lie_metric(fs, builtin_field("radial", {}, N), p), 2 * np.eye(N))


# -- plumbing ---------------------------------------------------------------------------


def test_slit_point_rejects_zero_fibre():
    with pytest.raises(ValueError):
        SlitPoint((0.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        SlitPoint((0.0,), (1.0, 0.0))


def test_base_field_validation():
    with pytest.raises(ValueError):
        BaseVectorField(2)
    bad = BaseVectorField(2, lambda xs: [xs[0]])
    with pytest.raises(ValueError):
        bad.expand(P, 1)
    assert np.allclose(zero_field(2).value((1.0, 2.0)), 0.0)


def test_field_arithmetic(fields):
    X, Y = fields
    x = (0.3, -0.2)
    assert np.allclose((X + Y).value(x), X.value(x) + Y.value(x))
    assert np.allclose((X - Y).value(x), X.value(x) - Y.value(x))
    assert np.allclose((2.5 * X).value(x), 2.5 * X.value(x))
    xi = complete_lift(X) + vertical_lift(Y)
    assert xi.projectable
    assert np.allclose(xi.value(P), complete_lift(X).value(P) + vertical_lift(Y).value(P))


def test_section_value_shape(rng):
    s = random_section(rng, N)
    assert isinstance(s, Section)
    assert s.value(P).shape == (N,)
    assert tilde_lie(builtin_finsler("euclidean", {}, N), liouville(N), s).value(P).shape == (N,)
