"""A small smooth-expression language for Finsler functions and vector fields.

Grammar (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = atom [ "^" exponent ] ;
    exponent = "-" exponent | atom [ "^" exponent ] ;   (must fold to an integer)
    atom     = number | ident | call | "(" expr ")" ;
    call     = func "(" expr { "," expr } ")" ;
    func     = "sqrt" | "sin" | "cos" | "exp" | "log" | "pow" ;
    ident    = ("x" | "y") digit { digit } ;
    field    = "[" expr { "," expr } "]" ;
    matrix   = "[" field { "," field } "]" ;

``^`` binds tighter than unary minus and is right-associative, so ``-x1^2`` is
``-(x1^2)``.  Exponents must be integer constants; ``pow(e, k)`` is the
function-call spelling of ``e^k``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from . import jets
from .jets import Jet, JetDomainError, JetPoint

FUNCTIONS = {"sqrt": 1, "sin": 1, "cos": 1, "exp": 1, "log": 1, "pow": 2}


class ExprError(ValueError):
    """Base class for expression errors; ``pos`` is a 0-based source offset."""

    def __init__(self, message: str, pos: int | None = None, source: str | None = None):
        self.message = message
        self.pos = pos
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.pos is None:
            return self.message
        return f"{self.message} (at position {self.pos})"


class ExprSyntaxError(ExprError):
    pass


class UnknownIdentifierError(ExprError):
    pass


class FibreVariableError(ExprError):
    pass


class ExponentError(ExprError):
    pass


class ExprEvaluationError(ExprError):
    """A jet domain error raised while evaluating a node, with the point attached."""

    def __init__(self, message: str, pos: int | None = None, point=None):
        self.point = point
        super().__init__(message, pos)

    def __str__(self) -> str:
        base = super().__str__()
        if self.point is None:
            return base
        pt = ", ".join(f"{v:.6g}" for v in self.point)
        return f"{base} at point ({pt})"


# -- AST -----------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    text: str
    pos: int = 0


@dataclass(frozen=True)
class Var:
    kind: str  # 'x' or 'y'
    index: int  # 1-based
    pos: int = 0

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    pos: int = 0


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: int = 0


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int
    pos: int = 0


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]
    pos: int = 0


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]


# -- tokenizer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),\[\]]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    pos: int


def tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        text = m.group(kind)
        toks.append(_Tok(kind, text, m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", n))
    return toks


# -- parser --------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str, dim: int, allow_fibre_vars: bool):
        self.source = source
        self.dim = dim
        self.allow_fibre = allow_fibre_vars
        self.toks = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, message: str, tok: _Tok | None = None) -> ExprSyntaxError:
        tok = tok or self.tok
        where = "end of input" if tok.kind == "end" else repr(tok.text)
        return ExprSyntaxError(f"{message}, found {where}", tok.pos, self.source)

    def expect(self, text: str) -> _Tok:
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        raise self.error(f"expected {text!r}")

    def at_op(self, *texts: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in texts

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.at_op("+", "-"):
            op = self.advance()
            node = BinOp(op.text, node, self.parse_term(), op.pos)
        return node

    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while self.at_op("*", "/"):
            op = self.advance()
            node = BinOp(op.text, node, self.parse_unary(), op.pos)
        return node

    def parse_unary(self) -> Expr:
        if self.at_op("-"):
            op = self.advance()
            return Neg(self.parse_unary(), op.pos)
        if self.at_op("+"):
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        if self.at_op("^"):
            op = self.advance()
            start = self.tok
            exponent = _fold_integer(self.parse_exponent())
            if exponent is None:
                raise ExponentError("exponent must be an integer constant", start.pos, self.source)
            return Pow(base, exponent, op.pos)
        return base

    def parse_exponent(self) -> Expr:
        if self.at_op("-"):
            op = self.advance()
            return Neg(self.parse_exponent(), op.pos)
        return self.parse_power()

    def parse_atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text), tok.text, tok.pos)
        if tok.kind == "name":
            self.advance()
            if self.at_op("("):
                return self.parse_call(tok)
            return self.make_var(tok)
        if self.at_op("("):
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        raise self.error("expected a number, identifier or '('")

    def parse_call(self, name: _Tok) -> Expr:
        if name.text not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name.text!r}", name.pos, self.source)
        self.expect("(")
        args = [self.parse_expr()]
        while self.at_op(","):
            self.advance()
            args.append(self.parse_expr())
        self.expect(")")
        arity = FUNCTIONS[name.text]
        if len(args) != arity:
            raise ExprSyntaxError(
                f"{name.text} takes {arity} argument(s), got {len(args)}", name.pos, self.source
            )
        if name.text == "pow":
            k = _fold_integer(args[1])
            if k is None:
                raise ExponentError("pow exponent must be an integer constant", name.pos, self.source)
            return Pow(args[0], k, name.pos)
        return Call(name.text, tuple(args), name.pos)

    def make_var(self, tok: _Tok) -> Var:
        m = re.fullmatch(r"([xy])([1-9]\d*)", tok.text)
        if not m or int(m.group(2)) > self.dim:
            raise UnknownIdentifierError(
                f"unknown identifier {tok.text!r} for dimension {self.dim}", tok.pos, self.source
            )
        if m.group(1) == "y" and not self.allow_fibre:
            raise FibreVariableError(
                f"fibre variable {tok.text!r} not allowed here", tok.pos, self.source
            )
        return Var(m.group(1), int(m.group(2)), tok.pos)

    def finish(self):
        if self.tok.kind != "end":
            raise self.error("unexpected trailing input")


def _fold_integer(node: Expr) -> int | None:
    if isinstance(node, Num):
        return int(node.value) if node.value.is_integer() and re.fullmatch(r"\d+", node.text) else None
    if isinstance(node, Neg):
        v = _fold_integer(node.operand)
        return None if v is None else -v
    if isinstance(node, Pow):
        b = _fold_integer(node.base)
        if b is None or node.exponent < 0:
            return None
        return b**node.exponent
    return None


def parse(source: str, dim: int, allow_fibre_vars: bool = True) -> Expr:
    """Parse a scalar expression over x1..x{dim} (and y1..y{dim} if allowed)."""
    p = _Parser(source, dim, allow_fibre_vars)
    node = p.parse_expr()
    p.finish()
    return node


def _parse_list(p: _Parser, item) -> list:
    p.expect("[")
    out = [item()]
    while p.at_op(","):
        p.advance()
        out.append(item())
    p.expect("]")
    return out


def parse_field(source: str, dim: int) -> tuple[Expr, ...]:
    """Parse ``[e1, ..., en]`` into the components of a base vector field."""
    p = _Parser(source, dim, allow_fibre_vars=False)
    comps = _parse_list(p, p.parse_expr)
    p.finish()
    if len(comps) != dim:
        raise ExprSyntaxError(f"field has {len(comps)} components, expected {dim}", 0, source)
    return tuple(comps)


def parse_matrix(source: str, dim: int, allow_fibre_vars: bool = False) -> tuple[tuple[Expr, ...], ...]:
    """Parse ``[[a11, a12], [a21, a22]]`` into a dim x dim matrix of expressions."""
    p = _Parser(source, dim, allow_fibre_vars)
    rows = _parse_list(p, lambda: _parse_list(p, p.parse_expr))
    p.finish()
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise ExprSyntaxError(f"matrix must be {dim}x{dim}", 0, source)
    return tuple(tuple(r) for r in rows)


# -- printing ------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_NEG_PREC = 3
_POW_PREC = 4


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    if isinstance(node, Pow):
        return _POW_PREC
    return 5


def _fmt_num(node: Num) -> str:
    if re.fullmatch(r"\d+", node.text):
        return str(int(node.text))
    return repr(node.value)


def pretty(node: Expr) -> str:
    """Canonical source text with minimal parentheses."""
    if isinstance(node, Num):
        return _fmt_num(node)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(pretty(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = pretty(node.operand)
        if _prec(node.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Pow):
        base = pretty(node.base)
        if _prec(node.base) <= _POW_PREC:
            base = f"({base})"
        return f"{base}^{node.exponent}" if node.exponent >= 0 else f"{base}^({node.exponent})"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left = pretty(node.left)
        if _prec(node.left) < p:
            left = f"({left})"
        right = pretty(node.right)
        # left-associative operators: a right operand of equal precedence keeps
        # its parentheses so the printed tree re-parses to the same shape
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def pretty_field(comps: Sequence[Expr]) -> str:
    return "[" + ", ".join(pretty(c) for c in comps) + "]"


def variables(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Pow):
        return variables(node.base)
    if isinstance(node, Call):
        return set().union(*(variables(a) for a in node.args))
    return set()


# -- evaluation ----------------------------------------------------------------

_JET_FUNCS = {"sqrt": jets.sqrt, "sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "log": jets.log}


def evaluate_jets(node: Expr, xs: Sequence[Jet], ys: Sequence[Jet] = ()) -> Jet:
    """Evaluate with x_i bound to ``xs[i-1]`` and y_i to ``ys[i-1]``."""
    template = xs[0] if xs else ys[0]

    def ev(nd: Expr) -> Jet:
        if isinstance(nd, Num):
            return Jet.constant(nd.value, template.order, template.num_vars)
        if isinstance(nd, Var):
            seq = xs if nd.kind == "x" else ys
            return seq[nd.index - 1]
        try:
            if isinstance(nd, Neg):
                return -ev(nd.operand)
            if isinstance(nd, BinOp):
                a, b = ev(nd.left), ev(nd.right)
                if nd.op == "+":
                    return a + b
                if nd.op == "-":
                    return a - b
                if nd.op == "*":
                    return a * b
                return a / b
            if isinstance(nd, Pow):
                return jets.pow_int(ev(nd.base), nd.exponent)
            if isinstance(nd, Call):
                return _JET_FUNCS[nd.func](ev(nd.args[0]))
        except ExprEvaluationError:
            raise
        except JetDomainError as exc:
            raise ExprEvaluationError(exc.message, nd.pos) from exc
        raise TypeError(f"not an expression node: {nd!r}")

    return ev(node)


def evaluate(node: Expr, point: JetPoint, order: int) -> Jet:
    """Evaluate at a JetPoint whose variables are tagged 'x' and 'y'."""
    coords = point.variables(order)
    xs = [c for c, k in zip(coords, point.var_kinds) if k == "x"]
    ys = [c for c, k in zip(coords, point.var_kinds) if k == "y"]
    if not xs and not ys:
        raise ValueError("point has no variables")
    needed = variables(node)
    for name in needed:
        seq = xs if name[0] == "x" else ys
        if int(name[1:]) > len(seq):
            raise ValueError(f"point does not provide {name}")
    try:
        return evaluate_jets(node, xs, ys)
    except ExprEvaluationError as exc:
        raise ExprEvaluationError(exc.message, exc.pos, point=point.values) from exc


def evaluate_value(node: Expr, x: Sequence[float], y: Sequence[float] = ()) -> float:
    """Plain float evaluation (order-0 jets)."""
    return evaluate(node, JetPoint.tangent(x, y) if len(y) else JetPoint(tuple(x), ("x",) * len(x)), 0).value


def float_value(node: Expr) -> float | None:
    """Value of a variable-free expression, or None."""
    if variables(node):
        return None
    try:
        return evaluate_jets(node, [Jet.constant(0.0, 0, 1)]).value
    except ExprEvaluationError:
        return math.nan
