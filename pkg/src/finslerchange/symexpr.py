"""Metric-definition DSL: parsing, printing and scalar-polymorphic evaluation.

Grammar (ASCII, whitespace-insensitive, case-sensitive identifiers)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?            # right associative
    atom   := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Names are ``x1..xn`` (position), ``y1..yn`` (direction), ``pi`` and the
declared parameters.  Functions: ``sqrt exp log sin cos abs`` (one
argument) and ``pow(base, exponent)``.  Exponents of ``^``/``pow`` must be
rational constants (e.g. ``2``, ``1/4``, ``-0.5``).

Evaluation works over floats and over :class:`~finslerchange.jets.Jet`
values alike, so an expression lifted on jets yields its derivatives.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Mapping, Union

from .jets import Jet, JetDomainError

FUNCTIONS = {"sqrt": 1, "exp": 1, "log": 1, "sin": 1, "cos": 1, "abs": 1, "pow": 2}
CONSTANTS = {"pi": math.pi}
_VAR_RE = re.compile(r"([xy])([1-9][0-9]*)$")


class DSLSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.message = message
        self.line = line
        self.column = column


class EvaluationError(ValueError):
    """Domain error raised while evaluating an expression."""


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: Fraction


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Param, Neg, BinOp, Pow, Call]


def walk(e: Expr):
    yield e
    if isinstance(e, Neg):
        yield from walk(e.operand)
    elif isinstance(e, BinOp):
        yield from walk(e.left)
        yield from walk(e.right)
    elif isinstance(e, Pow):
        yield from walk(e.base)
    elif isinstance(e, Call):
        yield from walk(e.arg)


def variables(e: Expr) -> set[Var]:
    return {node for node in walk(e) if isinstance(node, Var)}


def parameters(e: Expr) -> set[str]:
    return {node.name for node in walk(e) if isinstance(node, Param)}


# --- lexer / parser ----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            for k, ch in enumerate(m.group()):
                if ch == "\n":
                    line += 1
                    line_start = pos + k + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, params):
        self.toks = _tokenize(text)
        self.i = 0
        self.params = params

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        if tok.kind == "eof":
            msg = f"{msg} (unexpected end of input)"
        raise DSLSyntaxError(msg, tok.line, tok.col)

    def eat(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "eof":
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            self.error(f"unexpected token {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.i += 1
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            tok = self.tok
            self.i += 1
            return Pow(base, self._exponent(self.unary(), tok))
        return base

    def _exponent(self, e: Expr, tok: _Tok) -> Fraction:
        try:
            value = _const_value(e)
        except ValueError:
            self.error("exponent must be a rational constant", tok)
        frac = Fraction(value).limit_denominator(10**6)
        if abs(float(frac) - value) > 1e-12 * max(1.0, abs(value)):
            self.error("exponent must be a rational constant", tok)
        return frac

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            e = self.expr()
            self.eat(")")
            return e
        if tok.kind == "name":
            self.i += 1
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            return self.name(tok)
        self.error(f"unexpected token {tok.text!r}" if tok.kind != "eof" else "expected an expression")

    def name(self, tok: _Tok) -> Expr:
        m = _VAR_RE.match(tok.text)
        if m:
            return Var(m.group(1), int(m.group(2)))
        if tok.text in CONSTANTS:
            return Num(CONSTANTS[tok.text])
        if tok.text in FUNCTIONS:
            self.error(f"function {tok.text!r} used without arguments", tok)
        if self.params is None or tok.text in self.params:
            return Param(tok.text)
        self.error(f"unknown identifier {tok.text!r}", tok)

    def call(self, tok: _Tok) -> Expr:
        fname = tok.text
        if fname not in FUNCTIONS:
            self.error(f"unknown function {fname!r}", tok)
        self.eat("(")
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.i += 1
            args.append(self.expr())
        self.eat(")")
        if len(args) != FUNCTIONS[fname]:
            self.error(f"{fname} expects {FUNCTIONS[fname]} argument(s), got {len(args)}", tok)
        if fname == "pow":
            return Pow(args[0], self._exponent(args[1], tok))
        return Call(fname, args[0])


def _const_value(e: Expr) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg):
        return -_const_value(e.operand)
    if isinstance(e, BinOp):
        a, b = _const_value(e.left), _const_value(e.right)
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else math.nan}[e.op]
    if isinstance(e, Pow):
        return _const_value(e.base) ** float(e.exponent)
    raise ValueError("not a constant")


def parse(text: str, params=None) -> Expr:
    """Parse DSL text into an AST.

    ``params`` is the collection of declared parameter names; when given,
    any other non-variable identifier is a syntax error.  ``None`` accepts
    every identifier as a parameter (resolved at evaluation time).
    """
    return _Parser(text, None if params is None else set(params)).parse()


# --- printer -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(e: Expr) -> str:
    """Render an AST back to DSL text; ``parse(to_text(e)) == e``."""
    return _show(e, 0)


def _show(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        s = repr(e.value)
        if s in ("inf", "nan", "-inf"):
            raise ValueError(f"cannot print non-finite constant {s}")
        return f"({s})" if e.value < 0 else s
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Neg):
        s = "-" + _show(e.operand, 3)
        return f"({s})" if ctx > 0 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        s = f"{_show(e.left, p)} {e.op} {_show(e.right, p + 1)}"
        return f"({s})" if p < ctx else s
    if isinstance(e, Pow):
        ex = e.exponent
        ex_s = str(ex.numerator) if ex.denominator == 1 and ex >= 0 else f"({ex})"
        s = f"{_show(e.base, 4)}^{ex_s}"
        return f"({s})" if ctx > 3 else s
    if isinstance(e, Call):
        return f"{e.func}({_show(e.arg, 0)})"
    raise TypeError(f"not an expression node: {e!r}")


# --- evaluation --------------------------------------------------------------


def _fn(name: str) -> Callable[[Any], Any]:
    real = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log, "sin": math.sin, "cos": math.cos, "abs": abs}[name]

    def apply(v):
        if isinstance(v, Jet):
            return abs(v) if name == "abs" else getattr(v, name)()
        return real(v)

    return apply


def _real_pow(a: float, p: Fraction) -> float:
    if p.denominator == 1:
        return a ** int(p)
    if a < 0:
        raise ValueError(f"non-integer power {p} of negative value")
    return a ** float(p)


def compile_expr(e: Expr, consts: Mapping[str, float] | None = None) -> Callable[[list, list], Any]:
    """Compile an AST into ``f(xs, ys)`` over floats or Jets.

    Parameters are bound now from ``consts``; x/y variables are looked up by
    position in the argument lists.
    """
    consts = dict(consts or {})

    def build(node: Expr):
        if isinstance(node, Num):
            v = node.value
            return lambda xs, ys: v
        if isinstance(node, Var):
            k = node.index - 1
            return (lambda xs, ys: xs[k]) if node.kind == "x" else (lambda xs, ys: ys[k])
        if isinstance(node, Param):
            if node.name not in consts:
                raise EvaluationError(f"unbound parameter {node.name!r}")
            v = float(consts[node.name])
            return lambda xs, ys: v
        if isinstance(node, Neg):
            f = build(node.operand)
            return lambda xs, ys: -f(xs, ys)
        if isinstance(node, BinOp):
            a, b = build(node.left), build(node.right)
            if node.op == "+":
                return lambda xs, ys: a(xs, ys) + b(xs, ys)
            if node.op == "-":
                return lambda xs, ys: a(xs, ys) - b(xs, ys)
            if node.op == "*":
                return lambda xs, ys: a(xs, ys) * b(xs, ys)
            return lambda xs, ys: a(xs, ys) / b(xs, ys)
        if isinstance(node, Pow):
            f, p = build(node.base), node.exponent

            def pw(xs, ys):
                v = f(xs, ys)
                return v.power(p) if isinstance(v, Jet) else _real_pow(v, p)

            return pw
        if isinstance(node, Call):
            f, g = build(node.arg), _fn(node.func)
            text = to_text(node)

            def call(xs, ys):
                try:
                    return g(f(xs, ys))
                except (JetDomainError, ValueError, ZeroDivisionError, OverflowError) as exc:
                    if isinstance(exc, EvaluationError):
                        raise
                    raise EvaluationError(f"domain error in {text}: {exc}") from exc

            return call
        raise TypeError(f"not an expression node: {node!r}")

    body = build(e)
    text = None

    def evaluate(xs, ys):
        try:
            return body(xs, ys)
        except EvaluationError:
            raise
        except (JetDomainError, ValueError, ZeroDivisionError, OverflowError) as exc:
            nonlocal text
            text = text or to_text(e)
            raise EvaluationError(f"domain error in {text}: {exc}") from exc

    return evaluate


def evaluate(e: Expr, env: Mapping[str, Any]) -> Any:
    """Evaluate ``e`` with an environment mapping names (``x1``, ``y2``, params)."""
    xs, ys, consts = {}, {}, {}
    for k, v in env.items():
        m = _VAR_RE.match(k)
        if m:
            (xs if m.group(1) == "x" else ys)[int(m.group(2)) - 1] = v
        else:
            consts[k] = v
    for var in variables(e):
        if var.name not in env:
            raise EvaluationError(f"unbound variable {var.name!r}")
    size = max([0, *xs.keys(), *ys.keys()]) + 1
    xl = [xs.get(i, 0.0) for i in range(size)]
    yl = [ys.get(i, 0.0) for i in range(size)]
    return compile_expr(e, consts)(xl, yl)
