"""Built-in Finsler structures, vector fields and the ground-truth corpus.

Every builtin is generated as an expression string and goes through the same
parser as user input, so the recorded ``source`` is exactly what is evaluated.

Spec strings look like ``builtin:randers?b=0.3,0`` or ``expr:sqrt(y1^2+y2^2)``.
Inside the query part, a comma-separated token without ``=`` continues the
previous value, and commas inside brackets never split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

from .exprlang import ExprError, evaluate_value, parse_field, parse_matrix, pretty
from .geometry import FinslerStructure
from .jets import Jet
from .lifts import BaseVectorField


class SpecError(ValueError):
    """A model or field spec string could not be understood."""


# -- spec strings ------------------------------------------------------------------


def _split_top_level(text: str, sep: str = ",") -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
            if depth < 0:
                raise SpecError(f"unbalanced brackets in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise SpecError(f"unbalanced brackets in {text!r}")
    parts.append("".join(cur))
    return parts


def parse_spec(spec: str) -> tuple[str, str, dict[str, str]]:
    """Split a spec string into (kind, body, params).

    For ``builtin:`` specs the body is the registry name; for ``expr:`` specs the
    body is the expression source and params is empty.
    """
    spec = spec.strip()
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise SpecError(f"spec {spec!r} must start with 'builtin:' or 'expr:'")
    kind = kind.strip().lower()
    if kind == "expr":
        if not rest.strip():
            raise SpecError("empty expression")
        return kind, rest.strip(), {}
    if kind != "builtin":
        raise SpecError(f"unknown spec kind {kind!r}; use 'builtin:' or 'expr:'")
    name, _, query = rest.partition("?")
    name = name.strip().lower()
    if not name:
        raise SpecError("missing builtin name")
    params: dict[str, str] = {}
    last = None
    if query.strip():
        for token in _split_top_level(query):
            token = token.strip()
            if "=" in token:
                key, _, value = token.partition("=")
                key = key.strip()
                if not key:
                    raise SpecError(f"empty parameter name in {spec!r}")
                if key in params:
                    raise SpecError(f"parameter {key!r} given twice")
                params[key] = value.strip()
                last = key
            elif last is None:
                raise SpecError(f"parameter value {token!r} has no name")
            else:
                params[last] += "," + token
    return kind, name, params


def _floats(text: str, what: str) -> list[float]:
    t = text.strip()
    if t.startswith("[") and t.endswith("]"):
        t = t[1:-1]
    try:
        out = [float(v) for v in t.split(",") if v.strip()]
    except ValueError:
        raise SpecError(f"{what} must be a list of numbers, got {text!r}") from None
    if not out or not all(math.isfinite(v) for v in out):
        raise SpecError(f"{what} must be a list of finite numbers, got {text!r}")
    return out


def _vector(params: Mapping[str, str], key: str, n: int, default: Sequence[float]) -> list[float]:
    if key not in params:
        return list(default)
    v = _floats(params[key], key)
    if len(v) != n:
        raise SpecError(f"{key} has {len(v)} entries, expected {n}")
    return v


def _int(params: Mapping[str, str], key: str, default: int) -> int:
    if key not in params:
        return default
    try:
        return int(params[key])
    except ValueError:
        raise SpecError(f"{key} must be an integer, got {params[key]!r}") from None


def _num(v: float) -> str:
    r = repr(float(v))
    if r.endswith(".0"):
        r = r[:-2]
    return f"({r})" if r.startswith("-") else r


def _times(c: float, term: str) -> str:
    if c == 1.0:
        return term
    if c == -1.0:
        return f"-{term}"
    return f"{_num(c)}*{term}"


def _check_unused(params: Mapping[str, str], allowed: Sequence[str], name: str) -> None:
    extra = set(params) - set(allowed)
    if extra:
        raise SpecError(f"unknown parameter(s) for {name}: {', '.join(sorted(extra))}")


# -- Finsler models ------------------------------------------------------------------


def _norm_y(n: int) -> str:
    return "sqrt(" + " + ".join(f"y{i}^2" for i in range(1, n + 1)) + ")"


def _box(n: int, lo: float, hi: float) -> tuple[tuple[float, float], ...]:
    return tuple((lo, hi) for _ in range(n))


def _min_norm(r: float) -> Callable[[np.ndarray, np.ndarray], bool]:
    return lambda x, y: bool(np.linalg.norm(y) >= r)


def _euclidean(n: int, params: Mapping[str, str]) -> FinslerStructure:
    _check_unused(params, ("n",), "euclidean")
    return FinslerStructure.from_expression(
        _norm_y(n), n, name="euclidean", params={"n": n},
        x_box=_box(n, -1.0, 1.0), y_box=_box(n, -1.0, 1.0), safe=_min_norm(0.1),
    )


def _quadratic_form_source(A) -> str:
    n = len(A)
    terms = []
    for i in range(n):
        for j in range(i, n):
            coef = pretty(A[i][j])
            if coef in ("0", "0.0"):
                continue
            mult = "" if i == j else "2*"
            yy = f"y{i + 1}^2" if i == j else f"y{i + 1}*y{j + 1}"
            terms.append(f"{mult}({coef})*{yy}")
    if not terms:
        raise SpecError("metric matrix is identically zero")
    return "sqrt(" + " + ".join(terms) + ")"


def _riemannian(n: int, params: Mapping[str, str]) -> FinslerStructure:
    _check_unused(params, ("n", "metric"), "riemannian")
    spec = params.get("metric", "hyperbolic").strip()
    if spec == "hyperbolic":
        src = f"{_norm_y(n)}/x{n}"
        x_box = _box(n - 1, -1.0, 1.0) + ((0.5, 2.0),)
        return FinslerStructure.from_expression(
            src, n, name="riemannian", params={"n": n, "metric": "hyperbolic"},
            x_box=x_box, y_box=_box(n, -1.0, 1.0),
            safe=lambda x, y: bool(x[-1] > 0 and np.linalg.norm(y) >= 0.1),
        )
    try:
        A = parse_matrix(spec, n)
    except ExprError as exc:
        raise SpecError(f"bad metric matrix: {exc}") from exc
    for i in range(n):
        for j in range(i + 1, n):
            if pretty(A[i][j]) != pretty(A[j][i]):
                raise SpecError(f"metric matrix is not symmetric at ({i + 1},{j + 1})")

    def positive(x: np.ndarray, y: np.ndarray) -> bool:
        try:
            M = np.array([[evaluate_value(A[i][j], x) for j in range(n)] for i in range(n)])
        except ExprError:
            return False
        return bool(np.linalg.norm(y) >= 0.1 and np.linalg.eigvalsh(M)[0] > 1e-6)

    return FinslerStructure.from_expression(
        _quadratic_form_source(A), n, name="riemannian", params={"n": n, "metric": spec},
        x_box=_box(n, 0.5, 2.0), y_box=_box(n, -1.0, 1.0), safe=positive,
    )


def _polar(n: int, params: Mapping[str, str]) -> FinslerStructure:
    _check_unused(params, ("n",), "polar")
    if n != 2:
        raise SpecError("polar is only defined in dimension 2")
    return FinslerStructure.from_expression(
        "sqrt(y1^2 + x1^2*y2^2)", 2, name="polar", params={"n": 2},
        x_box=((0.5, 2.0), (-1.0, 1.0)), y_box=_box(2, -1.0, 1.0),
        safe=lambda x, y: bool(x[0] > 0 and np.linalg.norm(y) >= 0.1),
    )


def _randers(n: int, params: Mapping[str, str]) -> FinslerStructure:
    _check_unused(params, ("n", "b"), "randers")
    b = _vector(params, "b", n, [0.3] + [0.0] * (n - 1))
    if np.linalg.norm(b) >= 1.0:
        raise SpecError(f"randers needs |b| < 1, got |b| = {np.linalg.norm(b):.6g}")
    lin = " + ".join(f"{_num(c)}*y{i + 1}" for i, c in enumerate(b) if c != 0.0)
    src = _norm_y(n) + (f" + {lin}" if lin else "")
    return FinslerStructure.from_expression(
        src, n, name="randers", params={"n": n, "b": b},
        x_box=_box(n, -1.0, 1.0), y_box=_box(n, -1.0, 1.0), safe=_min_norm(0.1),
    )


def _quartic(n: int, params: Mapping[str, str]) -> FinslerStructure:
    _check_unused(params, ("n",), "quartic")
    src = "sqrt(sqrt(" + " + ".join(f"y{i}^4" for i in range(1, n + 1)) + "))"
    return FinslerStructure.from_expression(
        src, n, name="quartic", params={"n": n},
        x_box=_box(n, -1.0, 1.0), y_box=_box(n, -1.0, 1.0),
        safe=lambda x, y: bool(np.all(np.abs(y) >= 0.1)),
    )


@dataclass(frozen=True)
class ModelEntry:
    name: str
    parameters: str
    factory: Callable[[int, Mapping[str, str]], FinslerStructure]
    notes: str = ""


MODELS: Mapping[str, ModelEntry] = MappingProxyType(
    {
        "euclidean": ModelEntry("euclidean", "n", _euclidean, "F = |y|; flat."),
        "riemannian": ModelEntry(
            "riemannian", "n, metric=hyperbolic|[[a11,..],..]", _riemannian,
            "F = sqrt(a_ij(x) y^i y^j); default is the half-space metric I/x_n^2 on x_n in [0.5, 2].",
        ),
        "polar": ModelEntry("polar", "(n = 2)", _polar, "diag(1, x1^2) on x1 in [0.5, 2]."),
        "randers": ModelEntry("randers", "n, b", _randers, "F = |y| + b.y with constant b, |b| < 1."),
        "quartic": ModelEntry(
            "quartic", "n", _quartic,
            "F = (sum y_i^4)^(1/4); g degenerates on coordinate hyperplanes, samples keep |y_i| >= 0.1.",
        ),
    }
)


def builtin_finsler(name: str, params: Mapping[str, str] | None = None, dim: int | None = None) -> FinslerStructure:
    params = dict(params or {})
    entry = MODELS.get(name)
    if entry is None:
        raise SpecError(f"unknown model {name!r}; available: {', '.join(MODELS)}")
    n = _int(params, "n", dim if dim is not None else 2)
    if dim is not None and n != dim:
        raise SpecError(f"model dimension n={n} disagrees with --dim {dim}")
    if n < 2:
        raise SpecError("dimension must be at least 2")
    return entry.factory(n, params)


def finsler_from_spec(spec: str, dim: int | None = None) -> FinslerStructure:
    kind, body, params = parse_spec(spec)
    if kind == "builtin":
        return builtin_finsler(body, params, dim)
    if dim is None:
        raise SpecError("expression models need an explicit dimension")
    try:
        return FinslerStructure.from_expression(
            body, dim, x_box=_box(dim, -1.0, 1.0), y_box=_box(dim, -1.0, 1.0), safe=_min_norm(0.1)
        )
    except ExprError as exc:
        raise SpecError(str(exc)) from exc


# -- vector fields -------------------------------------------------------------------


def field_from_source(source: str, dim: int, name: str | None = None) -> BaseVectorField:
    """A base field from a bracketed list of expressions in x1..xn."""
    from .exprlang import evaluate_jets

    comps = parse_field(source, dim)

    def func(xs: Sequence[Jet]) -> list[Jet]:
        return [evaluate_jets(c, xs) for c in comps]

    pretty_src = "[" + ", ".join(pretty(c) for c in comps) + "]"
    return BaseVectorField(dim, func, name=name or source, source=pretty_src)


def _translation(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, ("v",), "translation")
    v = _vector(params, "v", n, [1.0] + [0.0] * (n - 1))
    return "[" + ", ".join(_num(c) for c in v) + "]"


def _rotation(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, ("i", "j"), "rotation")
    i, j = _int(params, "i", 1), _int(params, "j", 2)
    if not (1 <= i <= n and 1 <= j <= n) or i == j:
        raise SpecError(f"rotation needs distinct indices in 1..{n}, got i={i}, j={j}")
    comps = ["0"] * n
    comps[i - 1] = f"-x{j}"
    comps[j - 1] = f"x{i}"
    return "[" + ", ".join(comps) + "]"


def _radial(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, (), "radial")
    return "[" + ", ".join(f"x{i}" for i in range(1, n + 1)) + "]"


def _linear(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, ("A",), "linear")
    if "A" not in params:
        raise SpecError("linear needs a matrix parameter A=[[..],..]")
    try:
        rows = [_floats(r, "A row") for r in _split_top_level(params["A"].strip()[1:-1])]
    except (SpecError, IndexError) as exc:
        raise SpecError(f"bad matrix {params['A']!r}: {exc}") from None
    if len(rows) != n or any(len(r) != n for r in rows):
        raise SpecError(f"A must be {n}x{n}")
    comps = []
    for r in rows:
        terms = [_times(a, f"x{k + 1}") for k, a in enumerate(r) if a != 0.0]
        comps.append(" + ".join(terms) if terms else "0")
    return "[" + ", ".join(comps) + "]"


def _projective_quadratic(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, (), "projective_quadratic")
    return "[" + ", ".join(["x1^2"] + [f"x1*x{i}" for i in range(2, n + 1)]) + "]"


def _special_conformal(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, ("b",), "special_conformal")
    b = _vector(params, "b", n, [1.0] + [0.0] * (n - 1))
    bx = " + ".join(_times(c, f"x{i + 1}") for i, c in enumerate(b) if c != 0.0) or "0"
    sq = " + ".join(f"x{i}^2" for i in range(1, n + 1))
    comps = []
    for i in range(n):
        c = f"2*({bx})*x{i + 1}"
        if b[i] != 0.0:
            c += f" - {_times(b[i], f'({sq})')}"
        comps.append(c)
    return "[" + ", ".join(comps) + "]"


def _expr_field(n: int, params: Mapping[str, str]) -> str:
    _check_unused(params, ("source",), "expr")
    if "source" not in params:
        raise SpecError("expr field needs source=[..]")
    return params["source"]


@dataclass(frozen=True)
class FieldEntry:
    name: str
    parameters: str
    source: Callable[[int, Mapping[str, str]], str]
    notes: str = ""


FIELDS: Mapping[str, FieldEntry] = MappingProxyType(
    {
        "translation": FieldEntry("translation", "v", _translation, "constant field v (default e1)"),
        "rotation": FieldEntry("rotation", "i, j", _rotation, "-x_j e_i + x_i e_j (default i=1, j=2)"),
        "radial": FieldEntry("radial", "", _radial, "X = x"),
        "linear": FieldEntry("linear", "A", _linear, "X = A x"),
        "projective_quadratic": FieldEntry(
            "projective_quadratic", "", _projective_quadratic, "(x1^2, x1 x2, ..., x1 xn)"
        ),
        "special_conformal": FieldEntry(
            "special_conformal", "b", _special_conformal, "2(b.x)x - |x|^2 b (default b = e1)"
        ),
        "expr": FieldEntry("expr", "source", _expr_field, "bracketed component list"),
    }
)


def builtin_field(name: str, params: Mapping[str, str] | None, n: int) -> BaseVectorField:
    params = dict(params or {})
    entry = FIELDS.get(name)
    if entry is None:
        raise SpecError(f"unknown field {name!r}; available: {', '.join(FIELDS)}")
    src = entry.source(n, params)
    try:
        return field_from_source(src, n, name=name)
    except ExprError as exc:
        raise SpecError(str(exc)) from exc


def field_from_spec(spec: str, dim: int) -> BaseVectorField:
    kind, body, params = parse_spec(spec)
    if kind == "builtin":
        return builtin_field(body, params, dim)
    try:
        return field_from_source(body, dim)
    except ExprError as exc:
        raise SpecError(str(exc)) from exc


# -- ground truth --------------------------------------------------------------------

PROPERTIES = ("projective", "affine", "conformal", "homothetic", "killing", "volume_preserving")


def _props(*held: str) -> dict[str, bool]:
    unknown = set(held) - set(PROPERTIES)
    assert not unknown, unknown
    return {p: p in held for p in PROPERTIES}


_ALL = _props(*PROPERTIES)
_HOMOTHETIC = _props("projective", "affine", "conformal", "homothetic")
_NONE = _props()

Factor = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class GroundTruth:
    """Expected classification of one (model, field) pair.

    ``phi`` and ``psi`` give the conformal and projective factors as functions of
    (x, y) where they are forced; ``alpha`` is the homothety constant.
    """

    finsler: str
    field: str
    dim: int
    expected: Mapping[str, bool]
    provenance: str
    alpha: float | None = None
    phi: Factor | None = None
    psi: Factor | None = None
    divergence: Factor | None = None
    notes: str = ""

    @property
    def label(self) -> str:
        return f"{self.finsler} | {self.field} | n={self.dim}"


GROUND_TRUTH: tuple[GroundTruth, ...] = (
    GroundTruth("builtin:euclidean", "builtin:radial", 2, _HOMOTHETIC,
                "trivial: X^c E = y.y = 2E, linear field", alpha=2.0,
                divergence=lambda x, y: 4.0),
    GroundTruth("builtin:euclidean", "builtin:rotation", 2, _ALL,
                "trivial: antisymmetric Jacobian", alpha=0.0, psi=lambda x, y: 0.0),
    GroundTruth("builtin:euclidean", "builtin:translation?v=1,0.5", 2, _ALL,
                "trivial: constant field on a flat metric", alpha=0.0),
    GroundTruth("builtin:euclidean", "builtin:projective_quadratic", 2,
                _props("projective"),
                "derived: hand bracket [X^c, S] = -2 y1 C with S = (y, 0)",
                psi=lambda x, y: -2.0 * y[0], divergence=lambda x, y: 6.0 * x[0]),
    GroundTruth("builtin:euclidean", "builtin:linear?A=[[1,0],[0,2]]", 2,
                _props("projective", "affine"),
                "trivial: distinct eigenvalues, X^c E = y1^2 + 2 y2^2",
                divergence=lambda x, y: 6.0),
    GroundTruth("builtin:euclidean", "builtin:special_conformal", 2,
                _props("conformal"),
                "derived: DX = 2 x1 I + antisymmetric part, so L g = 4 x1 g",
                phi=lambda x, y: 4.0 * x[0], divergence=lambda x, y: 8.0 * x[0]),
    GroundTruth("builtin:euclidean", "builtin:radial", 3, _HOMOTHETIC,
                "trivial: X^c E = 2E", alpha=2.0, divergence=lambda x, y: 6.0),
    GroundTruth("builtin:euclidean", "builtin:rotation?i=1,j=3", 3, _ALL,
                "trivial: antisymmetric Jacobian", alpha=0.0),
    GroundTruth("builtin:euclidean", "builtin:projective_quadratic", 3,
                _props("projective"),
                "derived: hand bracket [X^c, S] = -2 y1 C",
                psi=lambda x, y: -2.0 * y[0], divergence=lambda x, y: 8.0 * x[0]),
    GroundTruth("builtin:randers?b=0.3,0", "builtin:translation", 2, _ALL,
                "trivial: energy independent of x", alpha=0.0),
    GroundTruth("builtin:randers?b=0.3,0", "builtin:radial", 2, _HOMOTHETIC,
                "trivial: x-independent 2-homogeneous energy, X^c E = 2E",
                alpha=2.0, divergence=lambda x, y: 4.0),
    GroundTruth("builtin:randers?b=0.3,0", "builtin:rotation", 2,
                _props("projective", "affine"),
                "derived: X^c F = -0.3 y2 is not a fibrewise multiple of F; zero spray makes linear fields affine"),
    GroundTruth("builtin:randers?b=0.2,-0.1,0.3", "builtin:translation?v=0,1,2", 3, _ALL,
                "trivial: energy independent of x", alpha=0.0),
    GroundTruth("builtin:quartic", "builtin:translation?v=1,-1", 2, _ALL,
                "trivial: energy independent of x", alpha=0.0),
    GroundTruth("builtin:quartic", "builtin:radial", 2, _HOMOTHETIC,
                "trivial: x-independent 2-homogeneous energy", alpha=2.0,
                divergence=lambda x, y: 4.0),
    GroundTruth("builtin:quartic", "builtin:radial", 3, _HOMOTHETIC,
                "trivial: x-independent 2-homogeneous energy", alpha=2.0,
                divergence=lambda x, y: 6.0),
    GroundTruth("builtin:polar", "builtin:translation?v=0,1", 2, _ALL,
                "trivial: energy independent of x2", alpha=0.0),
    GroundTruth("builtin:polar", "builtin:translation?v=1,0", 2, _NONE,
                "derived: X^c E = x1 y2^2 is not proportional to E; [X^c, S]_y = (-y2^2, -2 y1 y2 / x1^2)",
                divergence=lambda x, y: 2.0 / x[0]),
    GroundTruth("builtin:riemannian", "builtin:radial", 2, _ALL,
                "derived: dilations are isometries of the half-plane metric", alpha=0.0),
    GroundTruth("builtin:riemannian", "builtin:special_conformal", 2, _ALL,
                "derived: (x1^2 - x2^2, 2 x1 x2) is a half-plane isometry generator", alpha=0.0),
    GroundTruth("builtin:riemannian", "builtin:translation?v=1,0", 2, _ALL,
                "trivial: energy independent of x1", alpha=0.0),
    GroundTruth("builtin:riemannian", "builtin:translation?v=0,1", 2, _props("conformal"),
                "derived: X^c E = -2E/x2, a non-constant conformal factor",
                phi=lambda x, y: -2.0 / x[1], divergence=lambda x, y: -4.0 / x[1]),
)
