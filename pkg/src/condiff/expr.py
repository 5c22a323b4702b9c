"""Scalar expressions in named real variables.

Grammar (loosest to tightest)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?          # right-associative
    atom  := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^9``.  A unary minus applied
directly to a number literal is folded into the literal, which keeps
``x^-2`` an integer-literal power.

Expressions are compiled once into a Python function that is generic over an
arithmetic backend (plain floats, truncated Taylor series, mpmath numbers);
see :class:`FloatOps` for the backend protocol.
"""

from __future__ import annotations

import math
import operator
import re
import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (ArityError, DimensionMismatch, DomainError,
                     ExprSyntaxError, UnknownIdentifier)

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")

# integer literal exponents up to this size are expanded into products
MAX_LITERAL_POWER = 64


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float

    def emit(self, consts):
        consts.append(self.value)
        return f"K[{len(consts) - 1}]"

    def show(self):
        text = repr(float(self.value))
        return f"({text})" if self.value < 0 or text.startswith("-") else text


@dataclass(frozen=True)
class Var:
    index: int
    name: str

    def emit(self, consts):
        return f"v[{self.index}]"

    def show(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: object

    def emit(self, consts):
        return f"neg({self.arg.emit(consts)})"

    def show(self):
        return f"(-{self.arg.show()})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def emit(self, consts):
        lhs = self.left.emit(consts)
        if self.op == "^":
            k = literal_integer(self.right)
            if k is not None:
                return f"powi({lhs}, {k})"
            return f"pow_({lhs}, {self.right.emit(consts)})"
        name = {"+": "add", "-": "sub", "*": "mul", "/": "div"}[self.op]
        return f"{name}({lhs}, {self.right.emit(consts)})"

    def show(self):
        return f"({self.left.show()} {self.op} {self.right.show()})"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object

    def emit(self, consts):
        return f"{self.fn}_({self.arg.emit(consts)})"

    def show(self):
        return f"{self.fn}({self.arg.show()})"


def literal_integer(node):
    """Integer value of a number literal usable as a repeated-product exponent."""
    if isinstance(node, Num) and float(node.value).is_integer() \
            and abs(node.value) <= MAX_LITERAL_POWER:
        return int(node.value)
    return None


def _walk(node):
    yield node
    if isinstance(node, Neg):
        yield from _walk(node.arg)
    elif isinstance(node, BinOp):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        yield from _walk(node.arg)


# ---------------------------------------------------------------------------
# backends


class FloatOps:
    """Plain float arithmetic with domain checking.

    A backend supplies ``const`` plus the arithmetic callables named in
    :data:`_OP_NAMES`; ``powi`` receives a Python int exponent.
    """

    const = staticmethod(float)
    add = staticmethod(operator.add)
    sub = staticmethod(operator.sub)
    mul = staticmethod(operator.mul)
    neg = staticmethod(operator.neg)

    @staticmethod
    def div(a, b):
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b

    @staticmethod
    def powi(x, k):
        if k == 0:
            return 1.0
        r = x
        for _ in range(abs(k) - 1):
            r = r * x
        if k < 0:
            if r == 0.0:
                raise DomainError("zero raised to a negative power")
            return 1.0 / r
        return r

    @staticmethod
    def pow_(x, y):
        if x > 0.0:
            return math.pow(x, y)
        if x == 0.0:
            if y > 0.0:
                return 0.0
            if y == 0.0:
                return 1.0
            raise DomainError("zero raised to a negative power")
        if not float(y).is_integer():
            raise DomainError("negative base with non-integer exponent")
        return math.pow(x, y)

    @staticmethod
    def log_(x):
        if not x > 0.0:
            raise DomainError(f"log of non-positive value {x!r}")
        return math.log(x)

    @staticmethod
    def sqrt_(x):
        if x < 0.0:
            raise DomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)

    sin_ = staticmethod(math.sin)
    cos_ = staticmethod(math.cos)
    exp_ = staticmethod(math.exp)
    abs_ = staticmethod(abs)


class ArrayOps(FloatOps):
    """Element-wise numpy arithmetic for evaluating many points at once.

    Any invalid element raises :class:`DomainError` for the whole batch.
    """

    const = staticmethod(float)

    @staticmethod
    def div(a, b):
        if np.any(b == 0.0):
            raise DomainError("division by zero")
        return a / b

    @staticmethod
    def powi(x, k):
        if k < 0 and np.any(x == 0.0):
            raise DomainError("zero raised to a negative power")
        x = np.asarray(x, dtype=float)
        r = np.ones_like(x)
        for _ in range(abs(k)):
            r = r * x
        return 1.0 / r if k < 0 else r

    @staticmethod
    def pow_(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if np.any((x == 0.0) & (y < 0.0)):
            raise DomainError("zero raised to a negative power")
        if np.any((x < 0.0) & (y != np.round(y))):
            raise DomainError("negative base with non-integer exponent")
        return np.power(x, y)

    @staticmethod
    def log_(x):
        if np.any(~(x > 0.0)):
            raise DomainError("log of non-positive value")
        return np.log(x)

    @staticmethod
    def sqrt_(x):
        if np.any(x < 0.0):
            raise DomainError("sqrt of negative value")
        return np.sqrt(x)

    sin_ = staticmethod(np.sin)
    cos_ = staticmethod(np.cos)
    exp_ = staticmethod(np.exp)
    abs_ = staticmethod(np.abs)


_OP_NAMES = ("add", "sub", "mul", "div", "neg", "powi", "pow_",
             "sin_", "cos_", "exp_", "log_", "sqrt_", "abs_")

_BOUND_OPS = weakref.WeakKeyDictionary()


def _bound_ops(ops):
    try:
        return _BOUND_OPS[ops]
    except (KeyError, TypeError):
        bound = tuple(getattr(ops, name) for name in _OP_NAMES)
        try:
            _BOUND_OPS[ops] = bound
        except TypeError:
            pass
        return bound


# ---------------------------------------------------------------------------
# Expr


class Expr:
    """A parsed, immutable scalar expression.

    ``variables`` are the declared names (the evaluation point follows their
    order); ``vars`` lists the subset actually referenced.
    """

    __slots__ = ("root", "variables", "vars", "source", "_fn", "_consts")

    def __init__(self, root, variables, source=None):
        self.root = root
        self.variables = tuple(variables)
        used = {n.index for n in _walk(root) if isinstance(n, Var)}
        self.vars = tuple(v for i, v in enumerate(self.variables) if i in used)
        self.source = source if source is not None else root.show()
        consts = []
        body = root.emit(consts)
        args = ", ".join(("v", "K") + _OP_NAMES)
        self._fn = eval(f"lambda {args}: {body}", {}, {})  # generated from our own AST
        self._consts = tuple(consts)

    @property
    def n(self):
        return len(self.variables)

    def __str__(self):
        return self.root.show()

    def __repr__(self):
        return f"Expr({self.source!r}, variables={list(self.variables)})"

    def _check_dim(self, point):
        if len(point) != len(self.variables):
            raise DimensionMismatch(
                f"expression over {len(self.variables)} variables evaluated "
                f"at a point of dimension {len(point)}")

    def evaluate(self, point: Sequence[float]) -> float:
        self._check_dim(point)
        try:
            value = self.apply(FloatOps, [float(p) for p in point])
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise DomainError(str(exc)) from None
        return float(value)

    __call__ = evaluate

    def apply(self, ops, values):
        """Evaluate with backend ``ops`` on already-converted ``values``."""
        consts = [ops.const(c) for c in self._consts]
        return self._fn(values, consts, *_bound_ops(ops))

    def evaluate_many(self, points) -> np.ndarray:
        """Values at each row of ``points`` (shape ``(m, n)``)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_dim(points[0])
        with np.errstate(all="ignore"):
            out = self.apply(ArrayOps, [points[:, i] for i in range(points.shape[1])])
        out = np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0],)).copy()
        if not np.all(np.isfinite(out)):
            raise DomainError("non-finite value")
        return out

    def singular_parts(self):
        """Subexpressions whose zeros bound the domain.

        Denominators, bases of negative powers and arguments of ``log`` and
        ``sqrt``.
        """
        parts = []
        for node in _walk(self.root):
            if isinstance(node, BinOp) and node.op == "/":
                parts.append(node.right)
            elif isinstance(node, BinOp) and node.op == "^":
                k = literal_integer(node.right)
                if k is None or k < 0:
                    parts.append(node.left)
            elif isinstance(node, Call) and node.fn in ("log", "sqrt"):
                parts.append(node.arg)
        return [Expr(p, self.variables) for p in parts]


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


_OPERAND = ("number", "identifier", "'('", "'-'")


class _Parser:
    def __init__(self, source, variables):
        self.tokens = _tokenize(source)
        self.i = 0
        self.index = {name: k for k, name in enumerate(variables)}

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.take()
        if value != text or kind == "end":
            raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", pos,
                                  (repr(text),))

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", pos,
                                  ("operator", "end of input"))
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
        kind, value, _ = self.peek()
        if kind == "op" and value in ("-", "+"):
            self.take()
            arg = self.unary()
            if value == "+":
                return arg
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in self.index:
                return Var(self.index[value], value)
            if value in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ArityError(f"{value}() takes 1 argument, got {len(args)}")
                return Call(value, args[0])
            raise UnknownIdentifier(f"unknown identifier {value!r} at position {pos}")
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", pos, _OPERAND)


def parse(source: str, variables: Sequence[str]) -> Expr:
    """Parse ``source`` into an :class:`Expr` over the declared ``variables``."""
    variables = list(variables)
    if len(set(variables)) != len(variables):
        raise ValueError(f"duplicate variable names in {variables}")
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, _OPERAND)
    return Expr(_Parser(source, variables).parse(), variables, source)
