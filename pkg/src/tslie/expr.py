"""Small arithmetic expression language.

Expressions are immutable trees built from constants, variables, the binary
operators ``+ - * / ^`` (``**`` is accepted as a synonym for ``^``), unary
minus and the functions ``ln exp sin cos sqrt``.  Unary minus binds tighter
than ``^``, so ``-x^2`` is ``(-x)^2``; ``^`` is right associative.

Every role in the toolkit restricts the variables an expression may use,
see the ``*_VARS`` constants.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .errors import EvaluationError, ExprSyntaxError, UnknownIdentifierError

ALPHABET = frozenset({"t", "q", "qs", "qd", "qdd", "alpha"})
LAGRANGIAN_VARS = frozenset({"t", "qs", "qd"})
ACCELERATION_VARS = LAGRANGIAN_VARS
GENERATOR_VARS = frozenset({"t", "q"})
FAMILY_VARS = frozenset({"t", "alpha"})
SHIFT_VARS = frozenset({"t"})

FUNCTIONS = ("ln", "exp", "sin", "cos", "sqrt")


class Expression:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __str__(self):
        return serialize(self)


@dataclass(frozen=True)
class Const(Expression):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"Const holds finite non-negative values, got {self.value!r}")


@dataclass(frozen=True)
class Var(Expression):
    name: str


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True)
class Binary(Expression):
    op: str  # one of + - * / ^
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Func(Expression):
    name: str
    arg: Expression


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Expression:
    """Constant node; negative values become ``Neg(Const(|v|))``."""
    value = float(value)
    if value < 0:
        return Neg(Const(-value))
    return Const(value + 0.0)  # normalises -0.0


def var(name: str) -> Var:
    if name not in ALPHABET:
        raise UnknownIdentifierError(name, allowed=ALPHABET)
    return Var(name)


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
    r")"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)

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
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        # binds looser than ^, so -x^2 is -(x^2)
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ExprSyntaxError(f"function {val!r} needs an argument", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            if val not in self.variables:
                raise UnknownIdentifierError(val, pos, self.variables)
            return Var(val)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse(text: str, variables=ALPHABET) -> Expression:
    """Parse ``text`` into an expression using only ``variables``."""
    variables = frozenset(variables)
    unknown = variables - ALPHABET
    if unknown:
        raise ValueError(f"variables outside the alphabet: {sorted(unknown)}")
    return _Parser(text, variables).parse()


# --------------------------------------------------------------------------
# serialization

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}
_NEG_PREC = 2.5


def _prec(e):
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    return 5


def _fmt_number(v):
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def serialize(e: Expression) -> str:
    """Text form that parses back to a structurally identical tree."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({serialize(e.arg)})"
    if isinstance(e, Neg):
        inner = serialize(e.arg)
        return f"-({inner})" if _prec(e.arg) < _NEG_PREC else f"-{inner}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left, right = serialize(e.left), serialize(e.right)
        if e.op == "^":
            if _prec(e.left) < 5:
                left = f"({left})"
            if _prec(e.right) < _NEG_PREC:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def free_variables(e: Expression) -> frozenset:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Neg, Func)):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


def check_variables(e: Expression, allowed) -> None:
    extra = free_variables(e) - frozenset(allowed)
    if extra:
        name = sorted(extra)[0]
        raise UnknownIdentifierError(name, allowed=allowed)


# --------------------------------------------------------------------------
# evaluation


def _is_int(x):
    return float(x).is_integer()


@lru_cache(maxsize=4096)
def _compile_scalar(e):
    """Closure evaluating ``e`` on a dict of Python floats."""
    if isinstance(e, Const):
        v = e.value
        return lambda b: v
    if isinstance(e, Var):
        name = e.name

        def get(b):
            try:
                return b[name]
            except KeyError:
                raise EvaluationError(f"unbound variable {name!r}", e) from None

        return get
    if isinstance(e, Neg):
        f = _compile_scalar(e.arg)
        return lambda b: -f(b)
    if isinstance(e, Func):
        f = _compile_scalar(e.arg)
        name = e.name
        if name == "ln":
            def ln(b):
                x = f(b)
                if x <= 0:
                    raise EvaluationError(f"ln of non-positive value {x!r} in {serialize(e)}", e)
                return math.log(x)
            return ln
        if name == "sqrt":
            def sqrt(b):
                x = f(b)
                if x < 0:
                    raise EvaluationError(f"sqrt of negative value {x!r} in {serialize(e)}", e)
                return math.sqrt(x)
            return sqrt
        if name == "exp":
            def exp(b):
                try:
                    return math.exp(f(b))
                except OverflowError:
                    raise EvaluationError(f"overflow in {serialize(e)}", e) from None
            return exp
        fn = math.sin if name == "sin" else math.cos
        return lambda b: fn(f(b))
    fl, fr = _compile_scalar(e.left), _compile_scalar(e.right)
    op = e.op
    if op == "+":
        return lambda b: fl(b) + fr(b)
    if op == "-":
        return lambda b: fl(b) - fr(b)
    if op == "*":
        return lambda b: fl(b) * fr(b)
    if op == "/":
        def div(b):
            den = fr(b)
            if den == 0:
                raise EvaluationError(f"division by zero in {serialize(e)}", e)
            return fl(b) / den
        return div

    def power(b):
        base, ex = fl(b), fr(b)
        if _is_int(ex):
            n = int(ex)
            if base == 0 and n < 0:
                raise EvaluationError(f"division by zero in {serialize(e)}", e)
            try:
                return base ** n
            except OverflowError:
                raise EvaluationError(f"overflow in {serialize(e)}", e) from None
        if base < 0 or (base == 0 and ex < 0):
            raise EvaluationError(
                f"non-integer power of non-positive base {base!r} in {serialize(e)}", e)
        try:
            return base ** ex
        except OverflowError:
            raise EvaluationError(f"overflow in {serialize(e)}", e) from None

    return power


def _eval_array(e, b):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return b[e.name]
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}", e) from None
    if isinstance(e, Neg):
        return -_eval_array(e.arg, b)
    if isinstance(e, Func):
        x = np.asarray(_eval_array(e.arg, b), dtype=float)
        if e.name == "ln":
            if np.any(x <= 0):
                raise EvaluationError(f"ln of non-positive value in {serialize(e)}", e)
            return np.log(x)
        if e.name == "sqrt":
            if np.any(x < 0):
                raise EvaluationError(f"sqrt of negative value in {serialize(e)}", e)
            return np.sqrt(x)
        return {"exp": np.exp, "sin": np.sin, "cos": np.cos}[e.name](x)
    left = np.asarray(_eval_array(e.left, b), dtype=float)
    right = np.asarray(_eval_array(e.right, b), dtype=float)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        if np.any(right == 0):
            raise EvaluationError(f"division by zero in {serialize(e)}", e)
        return left / right
    integral = np.all(right == np.round(right))
    if integral:
        if np.any((left == 0) & (right < 0)):
            raise EvaluationError(f"division by zero in {serialize(e)}", e)
    elif np.any(left < 0) or np.any((left == 0) & (right < 0)):
        raise EvaluationError(f"non-integer power of non-positive base in {serialize(e)}", e)
    return np.power(left, right)


def evaluate(e: Expression, bindings: Mapping[str, object]):
    """Evaluate ``e``.

    Bindings may be floats or numpy arrays; arrays broadcast and the result
    is an array.  Domain errors (ln/sqrt of bad arguments, division by zero,
    overflow) raise ``EvaluationError`` naming the offending node.
    """
    if all(isinstance(v, (int, float)) for v in bindings.values()):
        value = _compile_scalar(e)({k: float(v) for k, v in bindings.items()})
        if not math.isfinite(value):
            raise EvaluationError(f"non-finite result evaluating {serialize(e)}", e)
        return float(value)
    arrays = {k: np.asarray(v, dtype=float) for k, v in bindings.items()}
    with np.errstate(all="ignore"):
        value = _eval_array(e, arrays)
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"non-finite result evaluating {serialize(e)}", e)
    if value.ndim == 0:
        return float(value)
    return value


# --------------------------------------------------------------------------
# differentiation


def _const_value(e):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def _neg(a):
    if isinstance(a, Neg):
        return a.arg
    ca = _const_value(a)
    if ca is not None:
        return const(-ca)
    return Neg(a)


def _add(a, b):
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None:
        return const(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if isinstance(b, Neg):
        return Binary("-", a, b.arg)
    return Binary("+", a, b)


def _sub(a, b):
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None:
        return const(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return _neg(b)
    return Binary("-", a, b)


def _mul(a, b):
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None:
        return const(ca * cb)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return _neg(b)
    if cb == -1:
        return _neg(a)
    return Binary("*", a, b)


def _div(a, b):
    ca, cb = _const_value(a), _const_value(b)
    if ca == 0:
        return ZERO
    if cb == 1:
        return a
    if ca is not None and cb is not None and cb != 0:
        return const(ca / cb)
    return Binary("/", a, b)


def _pow(a, b):
    cb = _const_value(b)
    if cb == 0:
        return ONE
    if cb == 1:
        return a
    return Binary("^", a, b)


@lru_cache(maxsize=4096)
def differentiate(e: Expression, name: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to variable ``name``."""
    if name not in ALPHABET:
        raise UnknownIdentifierError(name, allowed=ALPHABET)
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == name else ZERO
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, name))
    if isinstance(e, Func):
        u = e.arg
        du = differentiate(u, name)
        if _const_value(du) == 0:
            return ZERO
        if e.name == "ln":
            return _div(du, u)
        if e.name == "exp":
            return _mul(e, du)
        if e.name == "sin":
            return _mul(Func("cos", u), du)
        if e.name == "cos":
            return _neg(_mul(Func("sin", u), du))
        return _div(du, _mul(Const(2.0), e))  # sqrt
    a, b = e.left, e.right
    da, db = differentiate(a, name), differentiate(b, name)
    if e.op == "+":
        return _add(da, db)
    if e.op == "-":
        return _sub(da, db)
    if e.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if e.op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), _mul(b, b))
    # power
    if _const_value(db) == 0:
        if _const_value(da) == 0:
            return ZERO
        cb = _const_value(b)
        lowered = const(cb - 1) if cb is not None else _sub(b, ONE)
        return _mul(_mul(b, _pow(a, lowered)), da)
    # general exponent: d(a^b) = a^b * (b' ln a + b a'/a)
    return _mul(e, _add(_mul(db, Func("ln", a)), _div(_mul(b, da), a)))
