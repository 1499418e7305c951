"""Sparse multivariate polynomials with exact rational coefficients."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

Exponent = tuple[int, ...]


class PolyParseError(ValueError):
    """Raised for malformed polynomial text; carries the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True)
class MultiPoly:
    """Polynomial in ``nvars`` variables.

    ``terms`` is a tuple of ``(exponent, coefficient)`` pairs sorted in
    descending lexicographic order of the exponents. Coefficients are
    nonzero ``Fraction`` values. Use :meth:`from_dict` to build one.
    """

    nvars: int
    terms: tuple[tuple[Exponent, Fraction], ...]

    def __post_init__(self):
        if self.nvars < 1:
            raise ValueError("nvars must be positive")
        seen = set()
        for exp, c in self.terms:
            if len(exp) != self.nvars or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for nvars={self.nvars}")
            if c == 0:
                raise ValueError("zero coefficient stored")
            if exp in seen:
                raise ValueError(f"duplicate exponent {exp}")
            seen.add(exp)
        keys = [e for e, _ in self.terms]
        if keys != sorted(keys, reverse=True):
            raise ValueError("terms not in canonical order")

    @classmethod
    def from_dict(cls, nvars: int, coeffs: Mapping[Iterable[int], object]) -> "MultiPoly":
        acc: dict[Exponent, Fraction] = {}
        for exp, c in coeffs.items():
            e = tuple(int(v) for v in exp)
            acc[e] = acc.get(e, Fraction(0)) + Fraction(c)
        items = [(e, c) for e, c in acc.items() if c != 0]
        items.sort(key=lambda t: t[0], reverse=True)
        return cls(nvars, tuple(items))

    @classmethod
    def zero(cls, nvars: int) -> "MultiPoly":
        return cls(nvars, ())

    @classmethod
    def monomial(cls, exp: Iterable[int], coeff=1) -> "MultiPoly":
        e = tuple(exp)
        return cls.from_dict(len(e), {e: coeff})

    def as_dict(self) -> dict[Exponent, Fraction]:
        return dict(self.terms)

    @property
    def exponents(self) -> list[Exponent]:
        return [e for e, _ in self.terms]

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self, axis: int | None = None) -> int:
        """Total degree, or degree in variable ``axis`` (1-based). Zero poly has degree 0."""
        if not self.terms:
            return 0
        if axis is None:
            return max(sum(e) for e, _ in self.terms)
        return max(e[axis - 1] for e, _ in self.terms)

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "MultiPoly"):
        if self.nvars != other.nvars:
            raise ValueError("nvars mismatch")

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        self._check(other)
        acc = self.as_dict()
        for e, c in other.terms:
            acc[e] = acc.get(e, Fraction(0)) + c
        return MultiPoly.from_dict(self.nvars, acc)

    def __neg__(self) -> "MultiPoly":
        return MultiPoly(self.nvars, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other: "MultiPoly") -> "MultiPoly":
        return self + (-other)

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            c = Fraction(other)
            return MultiPoly.from_dict(self.nvars, {e: v * c for e, v in self.terms})
        self._check(other)
        acc: dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                e = tuple(a + b for a, b in zip(e1, e2))
                acc[e] = acc.get(e, Fraction(0)) + c1 * c2
        return MultiPoly.from_dict(self.nvars, acc)

    __rmul__ = __mul__

    def __call__(self, x) -> np.ndarray | float:
        return evaluate(self, x)

    def __str__(self) -> str:
        return format_poly(self)


# parsing ---------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<var>x\d+)|(?P<op>[-+*/^])|(?P<bad>\S))")


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # only trailing whitespace left
            break
        if m.group("bad") is not None:
            raise PolyParseError(f"unexpected character {m.group('bad')!r}", m.start("bad"))
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, nvars: int):
        self.toks = _tokenize(text)
        self.i = 0
        self.nvars = nvars

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise PolyParseError(f"expected {op!r}, got {val or 'end of input'!r}", pos)

    def parse(self) -> dict[Exponent, Fraction]:
        acc: dict[Exponent, Fraction] = {}
        sign = 1
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1 if val == "-" else 1
        while True:
            exp, coef = self.term()
            acc[exp] = acc.get(exp, Fraction(0)) + sign * coef
            kind, val, pos = self.peek()
            if kind == "end":
                return acc
            if kind == "op" and val in "+-":
                self.take()
                sign = -1 if val == "-" else 1
                continue
            raise PolyParseError(f"expected '+' or '-', got {val!r}", pos)

    def number(self) -> Fraction:
        kind, val, pos = self.take()
        sign = 1
        if kind == "op" and val == "-":
            sign = -1
            kind, val, pos = self.take()
        if kind != "num":
            raise PolyParseError(f"expected a number, got {val or 'end of input'!r}", pos)
        num = int(val)
        kind2, val2, _ = self.peek()
        if kind2 == "op" and val2 == "/":
            self.take()
            kd, vd, pd = self.take()
            if kd != "num":
                raise PolyParseError("expected a denominator", pd)
            if int(vd) == 0:
                raise PolyParseError("zero denominator", pd)
            return Fraction(sign * num, int(vd))
        return Fraction(sign * num)

    def term(self) -> tuple[Exponent, Fraction]:
        exp = [0] * self.nvars
        coef = Fraction(1)
        kind, val, pos = self.peek()
        if kind == "num" or (kind == "op" and val == "-"):
            coef = self.number()
            kind, val, _ = self.peek()
            if not (kind == "op" and val == "*"):
                return tuple(exp), coef  # bare constant term
            self.take()
        while True:
            self.factor(exp)
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                continue
            return tuple(exp), coef

    def factor(self, exp: list[int]):
        kind, val, pos = self.take()
        if kind != "var":
            raise PolyParseError(f"expected a variable, got {val or 'end of input'!r}", pos)
        idx = int(val[1:])
        if not 1 <= idx <= self.nvars:
            raise PolyParseError(f"variable {val} out of range for nvars={self.nvars}", pos)
        power = 1
        k2, v2, _ = self.peek()
        if k2 == "op" and v2 == "^":
            self.take()
            kp, vp, pp = self.take()
            if kp != "num" or int(vp) < 1:
                raise PolyParseError("expected a positive integer exponent", pp)
            power = int(vp)
        exp[idx - 1] += power


def parse_poly(text: str, nvars: int, allow_zero: bool = False) -> MultiPoly:
    """Parse text like ``"3*x1^2*x2^3 - 2/3*x2^5"`` into a :class:`MultiPoly`.

    A bare rational is accepted as a constant term so that every formatted
    polynomial parses back. The zero polynomial is rejected unless
    ``allow_zero`` is set.
    """
    if nvars < 1:
        raise ValueError("nvars must be positive")
    acc = _Parser(text, nvars).parse()
    p = MultiPoly.from_dict(nvars, acc)
    if p.is_zero() and not allow_zero:
        raise ValueError("polynomial is identically zero")
    return p


def _format_coef(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_poly(p: MultiPoly) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for k, (exp, c) in enumerate(p.terms):
        factors = []
        for i, e in enumerate(exp):
            if e == 1:
                factors.append(f"x{i + 1}")
            elif e > 1:
                factors.append(f"x{i + 1}^{e}")
        mag = abs(c)
        if not factors:
            body = _format_coef(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = _format_coef(mag) + "*" + "*".join(factors)
        if k == 0:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    return " ".join(parts)


# numerics --------------------------------------------------------------

def evaluate(p: MultiPoly, x) -> np.ndarray | float:
    """Evaluate ``p`` at points ``x`` of shape ``(..., nvars)``.

    Terms are summed in canonical order, so results are reproducible
    bit for bit. Returns a float for a single point.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 1
    if arr.shape[-1] != p.nvars:
        raise ValueError(f"expected last axis of length {p.nvars}, got {arr.shape}")
    out = np.zeros(arr.shape[:-1])
    if p.terms:
        maxdeg = max(max(e) for e, _ in p.terms)
        powers = [None] * p.nvars
        for i in range(p.nvars):
            col = arr[..., i]
            tab = [np.ones_like(col), col]
            for _ in range(2, maxdeg + 1):
                tab.append(tab[-1] * col)
            powers[i] = tab
        for exp, c in p.terms:
            val = np.full(arr.shape[:-1], float(c))
            for i, e in enumerate(exp):
                if e:
                    val = val * powers[i][e]
            out = out + val
    return float(out) if scalar else out


def partial_derivative(p: MultiPoly, axis: int) -> MultiPoly:
    """Formal derivative in variable ``axis`` (1-based)."""
    if not 1 <= axis <= p.nvars:
        raise ValueError(f"axis {axis} out of range 1..{p.nvars}")
    k = axis - 1
    acc = {}
    for exp, c in p.terms:
        if exp[k] == 0:
            continue
        e = list(exp)
        e[k] -= 1
        acc[tuple(e)] = c * exp[k]
    return MultiPoly.from_dict(p.nvars, acc)


def derivative(p: MultiPoly, gamma: Iterable[int]) -> MultiPoly:
    """Mixed partial ``∂^gamma p`` for a multi-index ``gamma``."""
    q = p
    for axis, g in enumerate(gamma, start=1):
        for _ in range(g):
            q = partial_derivative(q, axis)
    return q
