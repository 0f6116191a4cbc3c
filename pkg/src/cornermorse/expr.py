"""Scalar-field expressions over x1..xn with exact second-order jets.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | atom ('^' int)?
    atom   := number | ident '(' expr ')' | var | '(' expr ')'
    var    := 'x' [1-9][0-9]*

Evaluation propagates value, gradient and Hessian together in one forward
pass, so derivatives are exact up to floating point.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Pow", "Call", "Expression",
    "Jet2", "ExprSyntaxError", "ExprDomainError",
    "parse", "eval_jet2", "eval_value", "eval_grad", "pretty", "compile_expr",
]


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is a byte offset into the input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprDomainError(ArithmeticError):
    """A function was evaluated outside its domain."""

    def __init__(self, message: str, subterm: str):
        super().__init__(f"{message} in '{subterm}'")
        self.subterm = subterm


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Expression = Union[Num, Var, Neg, BinOp, Pow, Call]

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "log")

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"x([1-9][0-9]*)\Z")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            off = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[off]!r}", off)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.peek()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)
        return self.take()

    def operand(self, parse, op_tok):
        # a dangling binary operator is reported at the operator itself
        kind, val, off = self.peek()
        if kind == "end" or (kind == "op" and val in "*/^)+"):
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(
                f"operator {op_tok[1]!r} is missing its right operand "
                f"(found {found} at offset {off})", op_tok[2])
        return parse()

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op_tok = self.take()
            right = self.operand(self.term, op_tok)
            node = BinOp(op_tok[1], node, right)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op_tok = self.take()
            right = self.operand(self.factor, op_tok)
            node = BinOp(op_tok[1], node, right)
        return node

    def factor(self):
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            op_tok = self.take()
            return Neg(self.operand(self.factor, op_tok))
        node = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            op_tok = self.take()
            sign = 1
            if self.peek()[1] == "-" and self.peek()[0] == "op":
                self.take()
                sign = -1
            kind, val, off = self.peek()
            if kind != "num" or not val.isdigit():
                raise ExprSyntaxError(
                    "exponent after '^' must be an integer literal", op_tok[2]
                    if kind == "end" else off)
            self.take()
            node = Pow(node, sign * int(val))
        return node

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            m = _VAR.match(val)
            if m:
                idx = int(m.group(1))
                if idx > self.n:
                    raise ExprSyntaxError(
                        f"variable {val} exceeds dimension {self.n}", off)
                return Var(idx)
            if val not in FUNCTIONS:
                raise ExprSyntaxError(f"unknown identifier {val!r}", off)
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(val, arg)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"expected an operand, found {found}", off)


def parse(text: str, n: int) -> Expression:
    """Parse ``text`` into an expression tree over ``x1..xn``.

    Raises
    ------
    ExprSyntaxError
        On malformed input, unknown identifiers, or a variable index above n.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    p = _Parser(text, n)
    node = p.expr()
    kind, val, off = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected token {val!r}", off)
    return node


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def pretty(e: Expression, _prec: int = 0) -> str:
    """Render ``e`` back into grammar-conforming text (fully reparseable)."""
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        return s
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Call):
        return f"{e.func}({pretty(e.arg)})"
    if isinstance(e, Neg):
        s = "-" + pretty(e.arg, 3)
        return f"({s})" if _prec > 2 else s
    if isinstance(e, Pow):
        s = f"{pretty(e.base, 4)}^{e.exponent}"
        return f"({s})" if _prec > 3 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        s = f"{pretty(e.left, p)} {e.op} {pretty(e.right, p + 1)}"
        return f"({s})" if _prec > p else s
    raise TypeError(f"not an expression: {e!r}")


@dataclass
class Jet2:
    """Value, coordinate gradient and Hessian of a scalar at a point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


# (f, f', f'') for each elementary function, plus a domain check
_ELEMENTARY: dict[str, tuple[Callable, Callable, Callable]] = {
    "sin": (math.sin, math.cos, lambda u: -math.sin(u)),
    "cos": (math.cos, lambda u: -math.sin(u), lambda u: -math.cos(u)),
    "exp": (math.exp, math.exp, math.exp),
    "sqrt": (math.sqrt, lambda u: 0.5 / math.sqrt(u),
             lambda u: -0.25 / (u * math.sqrt(u))),
    "log": (math.log, lambda u: 1.0 / u, lambda u: -1.0 / (u * u)),
}


def _check_domain(func: str, u: float, node) -> None:
    if func == "sqrt" and u <= 0.0:
        # sqrt is not differentiable at 0 either
        raise ExprDomainError(f"sqrt of non-positive value {float(u)!r}", pretty(node))
    if func == "log" and u <= 0.0:
        raise ExprDomainError(f"log of non-positive value {float(u)!r}", pretty(node))


def compile_expr(e: Expression, n: int, order: int = 2) -> Callable:
    """Compile ``e`` into a closure ``x -> (value, grad[, hess])``.

    ``order`` selects first- or second-order jets. The closure tree mirrors
    the expression tree; evaluation is pure.
    """
    eye = np.eye(n)
    zero_g = np.zeros(n)
    zero_h = np.zeros((n, n))
    second = order >= 2

    def build(node):
        if isinstance(node, Num):
            v = node.value
            if second:
                return lambda x: (v, zero_g, zero_h)
            return lambda x: (v, zero_g)
        if isinstance(node, Var):
            i = node.index - 1
            g = eye[i]
            if second:
                return lambda x: (x[i], g, zero_h)
            return lambda x: (x[i], g)
        if isinstance(node, Neg):
            a = build(node.arg)
            if second:
                def neg2(x):
                    v, g, h = a(x)
                    return -v, -g, -h
                return neg2

            def neg1(x):
                v, g = a(x)
                return -v, -g
            return neg1
        if isinstance(node, BinOp):
            a, b = build(node.left), build(node.right)
            op = node.op
            if op == "+":
                if second:
                    def add2(x):
                        av, ag, ah = a(x)
                        bv, bg, bh = b(x)
                        return av + bv, ag + bg, ah + bh
                    return add2

                def add1(x):
                    av, ag = a(x)
                    bv, bg = b(x)
                    return av + bv, ag + bg
                return add1
            if op == "-":
                if second:
                    def sub2(x):
                        av, ag, ah = a(x)
                        bv, bg, bh = b(x)
                        return av - bv, ag - bg, ah - bh
                    return sub2

                def sub1(x):
                    av, ag = a(x)
                    bv, bg = b(x)
                    return av - bv, ag - bg
                return sub1
            if op == "*":
                if second:
                    def mul2(x):
                        av, ag, ah = a(x)
                        bv, bg, bh = b(x)
                        cross = np.outer(ag, bg)
                        return (av * bv, av * bg + bv * ag,
                                av * bh + bv * ah + cross + cross.T)
                    return mul2

                def mul1(x):
                    av, ag = a(x)
                    bv, bg = b(x)
                    return av * bv, av * bg + bv * ag
                return mul1
            # division: a * (1/b)
            text = pretty(node)

            def recip(bv):
                if bv == 0.0:
                    raise ExprDomainError("division by zero", text)
                return 1.0 / bv

            if second:
                def div2(x):
                    av, ag, ah = a(x)
                    bv, bg, bh = b(x)
                    r = recip(bv)
                    # r(b) = 1/b:  r' = -r^2, r'' = 2 r^3
                    rg = -r * r * bg
                    rh = -r * r * bh + 2.0 * r ** 3 * np.outer(bg, bg)
                    cross = np.outer(ag, rg)
                    return av * r, av * rg + r * ag, av * rh + r * ah + cross + cross.T
                return div2

            def div1(x):
                av, ag = a(x)
                bv, bg = b(x)
                r = recip(bv)
                return av * r, r * ag - av * r * r * bg
            return div1
        if isinstance(node, Pow):
            a = build(node.base)
            k = node.exponent
            text = pretty(node)

            def derivs(u):
                if k < 0 and u == 0.0:
                    raise ExprDomainError("zero to a negative power", text)
                if k == 0:
                    return 1.0, 0.0, 0.0
                d1 = k * u ** (k - 1)
                d2 = k * (k - 1) * u ** (k - 2) if k != 1 else 0.0
                return u ** k, d1, d2

            if second:
                def pow2(x):
                    v, g, h = a(x)
                    f0, f1, f2 = derivs(v)
                    return f0, f1 * g, f1 * h + f2 * np.outer(g, g)
                return pow2

            def pow1(x):
                v, g = a(x)
                f0, f1, _ = derivs(v)
                return f0, f1 * g
            return pow1
        if isinstance(node, Call):
            a = build(node.arg)
            f0, f1, f2 = _ELEMENTARY[node.func]
            func = node.func
            if second:
                def call2(x):
                    v, g, h = a(x)
                    _check_domain(func, v, node)
                    d1, d2 = f1(v), f2(v)
                    return f0(v), d1 * g, d1 * h + d2 * np.outer(g, g)
                return call2

            def call1(x):
                v, g = a(x)
                _check_domain(func, v, node)
                return f0(v), f1(v) * g
            return call1
        raise TypeError(f"not an expression: {node!r}")

    return build(e)


def _dimension(e: Expression) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Num):
        return 0
    if isinstance(e, (Neg, Call)):
        return _dimension(e.arg)
    if isinstance(e, Pow):
        return _dimension(e.base)
    return max(_dimension(e.left), _dimension(e.right))


def eval_jet2(e: Expression, p) -> Jet2:
    """Value, gradient and Hessian of ``e`` at ``p`` by forward jets.

    Examples
    --------
    >>> j = eval_jet2(parse("x1^2 + x1*x2", 2), [1.0, 2.0])
    >>> j.value, j.gradient.tolist(), j.hessian.tolist()
    (3.0, [4.0, 1.0], [[2.0, 1.0], [1.0, 0.0]])
    """
    p = np.asarray(p, dtype=float)
    n = max(len(p), _dimension(e))
    v, g, h = compile_expr(e, n, order=2)(p)
    h = np.array(h, dtype=float, copy=True)
    # symmetric by construction; enforce bit-exactness against rounding order
    h = 0.5 * (h + h.T)
    return Jet2(float(v), np.array(g, dtype=float), h)


def eval_value(e: Expression, p) -> float:
    p = np.asarray(p, dtype=float)
    return float(compile_expr(e, max(len(p), _dimension(e)), order=1)(p)[0])


def eval_grad(e: Expression, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.array(compile_expr(e, max(len(p), _dimension(e)), order=1)(p)[1], dtype=float)
