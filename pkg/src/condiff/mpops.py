"""Arbitrary-precision backend for :meth:`Expr.apply` (via mpmath).

Used where double precision cannot resolve a quantity, e.g. fourth-order
remainders of retractions at small steps.
"""

from __future__ import annotations

import contextlib

import mpmath

from .errors import DomainError


class MpOps:
    mpf = mpmath.mpf

    @staticmethod
    def const(value):
        return mpmath.mpf(value)

    @staticmethod
    @contextlib.contextmanager
    def precision(digits):
        with mpmath.workdps(digits):
            yield

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def sub(a, b):
        return a - b

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def neg(a):
        return -a

    @staticmethod
    def div(a, b):
        if b == 0:
            raise DomainError("division by zero")
        return a / b

    @staticmethod
    def powi(x, k):
        if k < 0 and x == 0:
            raise DomainError("zero raised to a negative power")
        return x ** k

    @staticmethod
    def pow_(x, y):
        if x == 0 and y < 0:
            raise DomainError("zero raised to a negative power")
        if x < 0 and y != mpmath.floor(y):
            raise DomainError("negative base with non-integer exponent")
        return mpmath.power(x, y)

    @staticmethod
    def log_(x):
        if not x > 0:
            raise DomainError("log of non-positive value")
        return mpmath.log(x)

    @staticmethod
    def sqrt_(x):
        if x < 0:
            raise DomainError("sqrt of negative value")
        return mpmath.sqrt(x)

    sin_ = staticmethod(mpmath.sin)
    cos_ = staticmethod(mpmath.cos)
    exp_ = staticmethod(mpmath.exp)
    abs_ = staticmethod(abs)
