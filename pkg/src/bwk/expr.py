"""Scalar expressions in chart variables, with forward-mode derivatives.

Metric components, 1-form components and curve paths all enter as strings
like "exp(2*x1) * sin(x2)".  parse() turns them into small immutable trees,
eval_value()/eval_dual() walk the tree with plain floats or dual numbers.
Values may be numpy arrays; every operation broadcasts, so one walk
evaluates an expression on a whole batch of points.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprDomainError(ExprError):
    pass


# ---------------------------------------------------------------------------
# dual numbers

@dataclass
class DualScalar:
    """value + deriv*eps with eps^2 = 0.  Fields may be numpy arrays."""

    value: object
    deriv: object

    def __add__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value + other.value, self.deriv + other.deriv)
        return DualScalar(self.value + other, self.deriv)

    __radd__ = __add__

    def __neg__(self):
        return DualScalar(-self.value, -self.deriv)

    def __sub__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value - other.value, self.deriv - other.deriv)
        return DualScalar(self.value - other, self.deriv)

    def __rsub__(self, other):
        return DualScalar(other - self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value * other.value,
                              self.deriv * other.value + self.value * other.deriv)
        return DualScalar(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualScalar):
            _check_nonzero(other.value, "division by zero")
            v = self.value / other.value
            return DualScalar(v, (self.deriv - v * other.deriv) / other.value)
        _check_nonzero(other, "division by zero")
        return DualScalar(self.value / other, self.deriv / other)

    def __rtruediv__(self, other):
        _check_nonzero(self.value, "division by zero")
        v = other / self.value
        return DualScalar(v, -v * self.deriv / self.value)


def _check_nonzero(value, message):
    if np.any(value == 0):
        raise ExprDomainError(message)


def _check_positive(value, message):
    if np.any(value <= 0):
        raise ExprDomainError(message)


def _dual_pow_int(base: DualScalar, n: int) -> DualScalar:
    if n == 0:
        return DualScalar(np.ones_like(base.value * 1.0), 0.0 * base.deriv)
    if n < 0:
        _check_nonzero(base.value, "zero raised to a negative power")
    v = np.power(base.value, n)
    return DualScalar(v, n * np.power(base.value, n - 1) * base.deriv)


_FUNCS = {
    "sin": (np.sin, lambda v: np.cos(v)),
    "cos": (np.cos, lambda v: -np.sin(v)),
    "tan": (np.tan, lambda v: 1.0 + np.tan(v) ** 2),
    "exp": (np.exp, lambda v: np.exp(v)),
    "atan": (np.arctan, lambda v: 1.0 / (1.0 + v * v)),
    # log and sqrt carry domain checks, handled in _apply
}


def _apply(fn: str, arg):
    dual = isinstance(arg, DualScalar)
    v = arg.value if dual else arg
    if fn == "log":
        _check_positive(v, "log of a non-positive value")
        return DualScalar(np.log(v), arg.deriv / v) if dual else np.log(v)
    if fn == "sqrt":
        if np.any(v < 0):
            raise ExprDomainError("sqrt of a negative value")
        if dual:
            _check_nonzero(v, "sqrt derivative at zero")
            r = np.sqrt(v)
            return DualScalar(r, arg.deriv / (2.0 * r))
        return np.sqrt(v)
    f, df = _FUNCS[fn]
    if dual:
        return DualScalar(f(v), df(v) * arg.deriv)
    return f(v)


# ---------------------------------------------------------------------------
# expression trees

@dataclass(frozen=True)
class Num:
    value: float

    def eval(self, env):
        return self.value


@dataclass(frozen=True)
class Var:
    index: int
    name: str

    def eval(self, env):
        return env[self.index]


@dataclass(frozen=True)
class Neg:
    child: object

    def eval(self, env):
        return -self.child.eval(env)


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object

    def eval(self, env):
        a = self.left.eval(env)
        b = self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if not isinstance(b, DualScalar):
                _check_nonzero(b, "division by zero")
            return a / b
        # power
        if isinstance(self.right, Num) and float(self.right.value).is_integer():
            n = int(self.right.value)
            if isinstance(a, DualScalar):
                return _dual_pow_int(a, n)
            if n < 0:
                _check_nonzero(a, "zero raised to a negative power")
            return np.power(a, n)
        av = a.value if isinstance(a, DualScalar) else a
        _check_positive(av, "non-integer power of a non-positive base")
        return _apply("exp", b * _apply("log", a))


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object

    def eval(self, env):
        return _apply(self.fn, self.arg.eval(env))


@dataclass(frozen=True)
class Expression:
    root: object
    variables: tuple
    source: str

    def __str__(self):
        return to_str(self)


# ---------------------------------------------------------------------------
# tokenizer / Pratt parser

_TOKEN_RE = re.compile(
    r"(?P<NUMBER>\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?)"
    r"|(?P<IDENT>[a-zA-Z_][a-zA-Z0-9_]*)"
    r"|(?P<OP>\*\*|[-+*/^()])"
    r"|(?P<WS>\s+)"
)

_BINDING = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BINDING = 30  # between mul/div and power, so -x^2 is -(x^2)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        if m.lastgroup != "WS":
            kind = m.lastgroup
            text = m.group()
            if kind == "OP" and text == "**":
                text = "^"
            tokens.append((kind, text, pos))
        pos = m.end()
    tokens.append(("END", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, t, pos = self.next()
        if t != text:
            raise ExprSyntaxError(f"expected {text!r}", pos)

    def expression(self, min_bp=0):
        node = self.nud()
        while True:
            kind, text, pos = self.peek()
            bp = _BINDING.get(text, -1) if kind == "OP" else -1
            if bp <= min_bp:
                break
            self.next()
            # right associative power: recurse with bp-1
            right = self.expression(bp - 1 if text == "^" else bp)
            node = Bin(text, node, right)
        return node

    def nud(self):
        kind, text, pos = self.next()
        if kind == "NUMBER":
            return Num(float(text))
        if kind == "IDENT":
            if text in _FUNCS or text in ("log", "sqrt"):
                self.expect("(")
                arg = self.expression(0)
                k, t, p = self.peek()
                if t == ",":
                    raise ExprSyntaxError(f"{text} takes one argument", p)
                self.expect(")")
                return Call(text, arg)
            if text in self.variables:
                return Var(self.variables.index(text), text)
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
        if text == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if text == "-":
            return Neg(self.expression(_UNARY_BINDING))
        if text == "+":
            return self.expression(_UNARY_BINDING)
        raise ExprSyntaxError(f"unexpected token {text or 'end of input'!r}", pos)


def parse(src: str, variables: Sequence[str] = ("x1", "x2", "x3")) -> Expression:
    """Parse an expression string over the given variable names.

    Grammar: ^ binds tightest (right associative), then unary minus, then
    * and /, then + and -.  Functions: sin cos tan exp log sqrt atan.
    """
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(_tokenize(src), tuple(variables))
    node = parser.expression(0)
    kind, text, pos = parser.peek()
    if kind != "END":
        raise ExprSyntaxError(f"unexpected token {text!r}", pos)
    return Expression(node, tuple(variables), src)


# ---------------------------------------------------------------------------
# evaluation entry points

def eval_value(e: Expression, point):
    """Evaluate at a point (sequence of floats or arrays, one per variable)."""
    if len(point) != len(e.variables):
        raise ExprError(f"expected {len(e.variables)} coordinates, got {len(point)}")
    return e.root.eval(list(point))


def eval_dual(e: Expression, point, seed) -> DualScalar:
    """Value and directional derivative along seed, by one dual-number walk."""
    if len(point) != len(e.variables) or len(seed) != len(e.variables):
        raise ExprError(f"expected {len(e.variables)} coordinates")
    env = [DualScalar(p, s) for p, s in zip(point, seed)]
    out = e.root.eval(env)
    if not isinstance(out, DualScalar):  # constant expression
        out = DualScalar(out, 0.0 * np.asarray(point[0], dtype=float))
    return out


def is_constant(e: Expression) -> bool:
    """True when no variable occurs in the expression."""
    def walk(node):
        if isinstance(node, Var):
            return False
        if isinstance(node, Num):
            return True
        if isinstance(node, Neg):
            return walk(node.child)
        if isinstance(node, Call):
            return walk(node.arg)
        return walk(node.left) and walk(node.right)
    return walk(e.root)


def to_str(e: Expression) -> str:
    return _print(e.root, 0)


def _print(node, parent_bp):
    if isinstance(node, Num):
        s = repr(node.value)
        return s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = _print(node.child, _UNARY_BINDING)
        s = f"-{inner}"
        return f"({s})" if parent_bp > _UNARY_BINDING else s
    if isinstance(node, Call):
        return f"{node.fn}({_print(node.arg, 0)})"
    bp = _BINDING[node.op]
    # - and / are left associative, ^ is right associative
    left = _print(node.left, bp - 1 if node.op != "^" else bp)
    right = _print(node.right, bp if node.op != "^" else bp - 1)
    s = f"{left} {node.op} {right}"
    return f"({s})" if parent_bp >= bp else s
