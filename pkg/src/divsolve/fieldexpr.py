"""Tiny expression language for analytic fields over x and y.

Grammar (lowest precedence first)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" ["-" | "+"] INT)?
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names are ``x``, ``y``, ``pi`` and ``e``; functions ``sin cos exp ln``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationDomainError, ExprSyntaxError, UnknownIdentifier
from .grid import Grid, ScalarField, VectorField

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "y")

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    child: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


@dataclass(frozen=True)
class FieldExpr:
    root: object
    source: str = ""

    def __call__(self, x, y):
        return evaluate(self, x, y)

    def pretty(self) -> str:
        return pretty(self.root)


def _tokenize(src: str):
    pos = 0
    out = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


class _Parser:
    def __init__(self, src):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, pos = self.peek()
        if val != text or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", pos)
        return self.take()

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] != "^":
            return base
        self.take()
        sign = 1
        if self.peek()[1] in ("-", "+"):
            sign = -1 if self.take()[1] == "-" else 1
        kind, val, pos = self.peek()
        if kind != "num" or not val.isdigit():
            raise ExprSyntaxError("exponent must be an integer literal", pos)
        self.take()
        return Pow(base, sign * int(val))

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Const(val)
            raise UnknownIdentifier(f"unknown identifier {val!r}", pos)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", pos)


def parse_field_expr(src: str) -> FieldExpr:
    return FieldExpr(_Parser(src).parse(), src)


def pretty(node) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(node, FieldExpr):
        node = node.root
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{pretty(node.child)})"
    if isinstance(node, BinOp):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    if isinstance(node, Pow):
        return f"({pretty(node.base)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.fn}({pretty(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


class _LnDomain(Exception):
    def __init__(self, mask):
        self.mask = mask


def _eval(node, x, y):
    if isinstance(node, Num):
        return np.full(np.shape(x), node.value)
    if isinstance(node, Var):
        return np.array(x if node.name == "x" else y, dtype=float)
    if isinstance(node, Const):
        return np.full(np.shape(x), CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_eval(node.child, x, y)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, x, y), _eval(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b
    if isinstance(node, Pow):
        b = _eval(node.base, x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return b ** float(node.exponent) if node.exponent < 0 else b ** node.exponent
    if isinstance(node, Call):
        v = _eval(node.arg, x, y)
        if node.fn == "ln":
            bad = ~(v > 0)
            if np.any(bad):
                raise _LnDomain(bad)
        with np.errstate(over="ignore"):
            return FUNCTIONS[node.fn](v)
    raise TypeError(f"not an expression node: {node!r}")


def _first(mask):
    idx = np.argwhere(np.atleast_1d(mask))
    return tuple(int(i) for i in idx[0])


def evaluate(e: FieldExpr, x, y, where: str = "point"):
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
    try:
        out = _eval(e.root, x, y)
    except _LnDomain as exc:
        loc = _first(exc.mask)
        px, py = np.atleast_1d(x)[loc], np.atleast_1d(y)[loc]
        raise EvaluationDomainError(
            f"ln of a non-positive value in {e.source!r} at {where} {loc} = ({px:.6g}, {py:.6g})",
            loc) from None
    bad = ~np.isfinite(out)
    if np.any(bad):
        loc = _first(bad)
        px, py = np.atleast_1d(x)[loc], np.atleast_1d(y)[loc]
        raise EvaluationDomainError(
            f"non-finite value of {e.source!r} at {where} {loc} = ({px:.6g}, {py:.6g})", loc)
    return out


def _expr(e):
    return parse_field_expr(e) if isinstance(e, str) else e


def sample_scalar(e, grid: Grid) -> ScalarField:
    """Values at cell centers."""
    x, y = grid.cell_centers()
    return ScalarField(grid, evaluate(_expr(e), x, y, "cell"))


def sample_vector(ex, ey, grid: Grid) -> VectorField:
    """Normal components at face centers; boundary faces are then zeroed."""
    xx, xy = grid.xface_centers()
    yx, yy = grid.yface_centers()
    ux = evaluate(_expr(ex), xx, xy, "x-face")
    uy = evaluate(_expr(ey), yx, yy, "y-face")
    return VectorField.masked(grid, ux, uy)
