"""Exact integer polynomials in the frequency variables k1..kn.

Polynomials are stored sparsely as ``{exponent tuple: coefficient}``.
Only integer arithmetic is used, so every identity checked on top of this
module is exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

_INT_BOUND = 2**63


def _check(c: int) -> int:
    if not -_INT_BOUND <= c < _INT_BOUND:
        raise OverflowError(f"coefficient {c} exceeds the 64-bit range")
    return c


@dataclass(frozen=True)
class LinearFreq:
    """Signed sum of base frequencies, coefficients in {-1, 0, 1}."""

    coeffs: tuple[int, ...]

    def __post_init__(self):
        coeffs = tuple(int(c) for c in self.coeffs)
        if any(c not in (-1, 0, 1) for c in coeffs):
            raise ValueError(f"linear frequency coefficients must be in {{-1,0,1}}: {coeffs}")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def var(cls, i: int, nvars: int, sign: int = 1) -> "LinearFreq":
        c = [0] * nvars
        c[i] = sign
        return cls(tuple(c))

    @classmethod
    def zero(cls, nvars: int) -> "LinearFreq":
        return cls((0,) * nvars)

    @property
    def nvars(self) -> int:
        return len(self.coeffs)

    def __add__(self, other: "LinearFreq") -> "LinearFreq":
        return LinearFreq(tuple(a + b for a, b in zip(self.coeffs, other.coeffs, strict=True)))

    def __neg__(self) -> "LinearFreq":
        return LinearFreq(tuple(-c for c in self.coeffs))

    def __sub__(self, other: "LinearFreq") -> "LinearFreq":
        return self + (-other)

    def scaled(self, sign: int) -> "LinearFreq":
        return self if sign == 1 else -self

    def eval_at(self, freqs: Sequence[int]) -> int:
        if len(freqs) != self.nvars:
            raise ValueError("frequency vector length does not match nvars")
        return sum(c * int(f) for c, f in zip(self.coeffs, freqs))

    def to_poly(self) -> "FreqPoly":
        return FreqPoly.linear(self)

    def __str__(self) -> str:
        parts = []
        for i, c in enumerate(self.coeffs):
            if c == 0:
                continue
            sign = "-" if c < 0 else ("+" if parts else "")
            parts.append(f"{sign}k{i + 1}")
        return "".join(parts) if parts else "0"

    @classmethod
    def parse(cls, text: str, nvars: int) -> "LinearFreq":
        text = text.strip()
        if text == "0":
            return cls.zero(nvars)
        c = [0] * nvars
        pos = 0
        for m in re.finditer(r"([+-]?)k(\d+)", text):
            if m.start() != pos:
                raise ValueError(f"malformed linear frequency {text!r}")
            pos = m.end()
            i = int(m.group(2)) - 1
            if not 0 <= i < nvars or c[i] != 0:
                raise ValueError(f"bad variable index in {text!r}")
            c[i] = -1 if m.group(1) == "-" else 1
        if pos != len(text) or pos == 0:
            raise ValueError(f"malformed linear frequency {text!r}")
        return cls(tuple(c))


@dataclass(frozen=True)
class FreqPoly:
    """Sparse multivariate polynomial with integer coefficients."""

    nvars: int
    terms: Mapping[tuple[int, ...], int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for exp, c in self.terms.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.nvars or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent vector {exp} for nvars={self.nvars}")
            c = _check(int(c))
            if c:
                clean[exp] = c
        object.__setattr__(self, "terms", clean)

    # construction
    @classmethod
    def zero(cls, nvars: int) -> "FreqPoly":
        return cls(nvars, {})

    @classmethod
    def const(cls, c: int, nvars: int) -> "FreqPoly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, i: int, nvars: int) -> "FreqPoly":
        exp = [0] * nvars
        exp[i] = 1
        return cls(nvars, {tuple(exp): 1})

    @classmethod
    def linear(cls, lin: LinearFreq) -> "FreqPoly":
        n = lin.nvars
        terms = {}
        for i, c in enumerate(lin.coeffs):
            if c:
                exp = [0] * n
                exp[i] = 1
                terms[tuple(exp)] = c
        return cls(n, terms)

    # arithmetic
    def _same(self, other: "FreqPoly") -> None:
        if self.nvars != other.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other: "FreqPoly") -> "FreqPoly":
        self._same(other)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            out[exp] = _check(out.get(exp, 0) + c)
        return FreqPoly(self.nvars, out)

    def __neg__(self) -> "FreqPoly":
        return FreqPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "FreqPoly") -> "FreqPoly":
        return self + (-other)

    def __mul__(self, other: "FreqPoly | int") -> "FreqPoly":
        if isinstance(other, int):
            return FreqPoly(self.nvars, {e: _check(c * other) for e, c in self.terms.items()})
        self._same(other)
        out: dict[tuple[int, ...], int] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = _check(out.get(e, 0) + _check(c1 * c2))
        return FreqPoly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "FreqPoly":
        if n < 0:
            raise ValueError("negative powers are not polynomials")
        out = FreqPoly.const(1, self.nvars)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FreqPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.nvars, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def eval_at(self, freqs: Sequence[int]) -> int:
        if len(freqs) != self.nvars:
            raise ValueError("frequency vector length does not match nvars")
        total = 0
        for exp, c in self.terms.items():
            term = c
            for f, e in zip(freqs, exp):
                term *= int(f) ** e
            total += term
        return total

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"FreqPoly({render(self)!r}, nvars={self.nvars})"


def add(p: FreqPoly, q: FreqPoly) -> FreqPoly:
    return p + q


def mul(p: FreqPoly, q: FreqPoly) -> FreqPoly:
    return p * q


def eval_at(p: FreqPoly, freqs: Sequence[int]) -> int:
    return p.eval_at(freqs)


def substitute_linear(p: FreqPoly, var: int, repl: LinearFreq) -> FreqPoly:
    """Replace variable ``var`` by the linear form ``repl`` and expand."""
    if not 0 <= var < p.nvars:
        raise ValueError(f"variable index {var} out of range")
    if repl.nvars != p.nvars:
        raise ValueError("replacement lives on a different variable set")
    lin = FreqPoly.linear(repl)
    out = FreqPoly.zero(p.nvars)
    powers = {0: FreqPoly.const(1, p.nvars)}
    for exp, c in p.terms.items():
        e = exp[var]
        if e not in powers:
            powers[e] = lin ** e
        rest = list(exp)
        rest[var] = 0
        out = out + FreqPoly(p.nvars, {tuple(rest): c}) * powers[e]
    return out


def p_dom(p: FreqPoly) -> FreqPoly:
    """Dominant part: a*(sum of k_i)^m over the pure top-degree powers a*k_i^m."""
    m = p.degree
    if m <= 0:
        return FreqPoly.zero(p.nvars)
    pure = {}
    for exp, c in p.terms.items():
        if sum(exp) == m and sum(1 for e in exp if e) == 1:
            pure[exp.index(m)] = c
    if not pure or len(set(pure.values())) != 1:
        return FreqPoly.zero(p.nvars)
    a = next(iter(pure.values()))
    s = FreqPoly.zero(p.nvars)
    for i in sorted(pure):
        s = s + FreqPoly.var(i, p.nvars)
    return (s ** m) * a


def p_low(p: FreqPoly) -> FreqPoly:
    return p - p_dom(p)


# text format

def _monomial_key(exp: tuple[int, ...]):
    # graded lex, highest first
    return (-sum(exp), tuple(-e for e in exp))


def render(p: FreqPoly) -> str:
    if p.is_zero():
        return "0"
    out = []
    for exp in sorted(p.terms, key=_monomial_key):
        c = p.terms[exp]
        factors = [f"k{i + 1}" if e == 1 else f"k{i + 1}^{e}" for i, e in enumerate(exp) if e]
        mag = abs(c)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([str(mag)] + factors)
        if not out:
            out.append(("-" if c < 0 else "") + body)
        else:
            out.append((" - " if c < 0 else " + ") + body)
    return "".join(out)


_TERM = re.compile(r"\s*([+-])?\s*([^+-]+)")


def parse(text: str, nvars: int) -> FreqPoly:
    """Parse the canonical rendering back into a polynomial."""
    text = text.strip()
    if not text:
        raise ValueError("empty polynomial text")
    terms: dict[tuple[int, ...], int] = {}
    pos = 0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse polynomial near {text[pos:]!r}")
        sign = -1 if m.group(1) == "-" else 1
        coeff = 1
        exp = [0] * nvars
        for factor in m.group(2).strip().split("*"):
            factor = factor.strip()
            if re.fullmatch(r"\d+", factor):
                coeff *= int(factor)
                continue
            fm = re.fullmatch(r"k(\d+)(?:\^(\d+))?", factor)
            if not fm:
                raise ValueError(f"bad factor {factor!r}")
            i = int(fm.group(1)) - 1
            if not 0 <= i < nvars:
                raise ValueError(f"variable k{i + 1} outside nvars={nvars}")
            exp[i] += int(fm.group(2) or 1)
        key = tuple(exp)
        terms[key] = terms.get(key, 0) + sign * coeff
        pos = m.end()
    return FreqPoly(nvars, terms)


def poly_sum(polys: Iterable[FreqPoly], nvars: int) -> FreqPoly:
    out = FreqPoly.zero(nvars)
    for p in polys:
        out = out + p
    return out
