"""Sparse multivariate polynomials with exact coefficients.

A monomial is a tuple of ``(variable, exponent)`` pairs sorted by variable
name; the empty tuple is the constant monomial.  Coefficients are either
:class:`fractions.Fraction` values or :class:`AffineForm` values (affine
expressions over named LP unknowns), which lets one class carry both
concrete polynomials and templates with unknown coefficients.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Union

Monomial = tuple  # tuple[tuple[str, int], ...]

ONE: Monomial = ()


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value)
    return Fraction(value)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    exps = dict(a)
    for var, e in b:
        exps[var] = exps.get(var, 0) + e
    return tuple(sorted(exps.items()))


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_str(m: Monomial) -> str:
    if not m:
        return "1"
    return "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)


def monomials_upto(variables: Iterable[str], degree: int) -> list[Monomial]:
    """All monomials of total degree <= ``degree``, graded then lexicographic."""
    variables = sorted(variables)
    out: list[Monomial] = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(variables, total):
            exps: dict[str, int] = {}
            for v in combo:
                exps[v] = exps.get(v, 0) + 1
            out.append(tuple(sorted(exps.items())))
    return out


class AffineForm:
    """Affine expression ``const + sum(coef[u] * u)`` over named unknowns."""

    __slots__ = ("const", "terms")

    def __init__(self, terms: Mapping | None = None, const=0):
        self.const = to_fraction(const)
        self.terms: dict = {}
        if terms:
            for k, v in terms.items():
                v = to_fraction(v)
                if v != 0:
                    self.terms[k] = v

    @classmethod
    def var(cls, name) -> "AffineForm":
        return cls({name: 1})

    def is_zero(self) -> bool:
        return self.const == 0 and not self.terms

    def __add__(self, other):
        if isinstance(other, AffineForm):
            terms = dict(self.terms)
            for k, v in other.terms.items():
                s = terms.get(k, 0) + v
                if s:
                    terms[k] = s
                else:
                    terms.pop(k, None)
            out = AffineForm()
            out.terms = terms
            out.const = self.const + other.const
            return out
        out = AffineForm()
        out.terms = dict(self.terms)
        out.const = self.const + to_fraction(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        out = AffineForm()
        out.terms = {k: -v for k, v in self.terms.items()}
        out.const = -self.const
        return out

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, AffineForm):
            if not other.terms:
                return self * other.const
            if not self.terms:
                return other * self.const
            raise TypeError("product of two non-constant affine forms is not affine")
        c = to_fraction(other)
        if c == 0:
            return AffineForm()
        out = AffineForm()
        out.terms = {k: v * c for k, v in self.terms.items()}
        out.const = self.const * c
        return out

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, AffineForm):
            return self.const == other.const and self.terms == other.terms
        if not self.terms:
            return self.const == other
        return False

    def __hash__(self):
        return hash((self.const, tuple(sorted(self.terms.items(), key=repr))))

    def evaluate(self, assignment: Mapping) -> Fraction:
        total = self.const
        for k, v in self.terms.items():
            total += v * to_fraction(assignment[k])
        return total

    def __repr__(self):
        parts = [f"{v}*{k}" for k, v in self.terms.items()]
        if self.const or not parts:
            parts.append(str(self.const))
        return " + ".join(parts)


Coef = Union[Fraction, AffineForm]


def _is_zero(c) -> bool:
    if isinstance(c, AffineForm):
        return c.is_zero()
    return c == 0


class Poly:
    """Immutable sparse polynomial ``{monomial: coefficient}``."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping | None = None):
        clean = {}
        if terms:
            for m, c in terms.items():
                if not isinstance(c, AffineForm):
                    c = to_fraction(c)
                if not _is_zero(c):
                    clean[m] = c
        self.terms: dict = clean
        self._hash = None

    # -- constructors --------------------------------------------------
    @classmethod
    def const(cls, c) -> "Poly":
        return cls({ONE: c})

    @classmethod
    def var(cls, name: str) -> "Poly":
        return cls({((name, 1),): 1})

    @classmethod
    def zero(cls) -> "Poly":
        return cls()

    # -- queries -------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((mono_degree(m) for m in self.terms), default=0)

    def variables(self) -> set[str]:
        return {v for m in self.terms for v, _ in m}

    def is_constant(self) -> bool:
        return all(not m for m in self.terms)

    def constant_term(self):
        return self.terms.get(ONE, Fraction(0))

    def coefficient(self, m: Monomial):
        return self.terms.get(m, Fraction(0))

    def is_parametric(self) -> bool:
        return any(isinstance(c, AffineForm) for c in self.terms.values())

    def __iter__(self) -> Iterator:
        return iter(self.terms.items())

    # -- arithmetic ----------------------------------------------------
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            return other
        return Poly.const(other)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            if m in terms:
                terms[m] = terms[m] + c
            else:
                terms[m] = c
        return Poly(terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            if isinstance(other, AffineForm):
                return Poly({m: c * other for m, c in self.terms.items()})
            c = to_fraction(other)
            return Poly({m: v * c for m, v in self.terms.items()})
        terms: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                p = c1 * c2
                if m in terms:
                    terms[m] = terms[m] + p
                else:
                    terms[m] = p
        return Poly(terms)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        result = Poly.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(other)
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    # -- transformations -----------------------------------------------
    def substitute(self, mapping: Mapping[str, "Poly"], cache: dict | None = None) -> "Poly":
        """Simultaneous substitution of variables by polynomials."""
        out = Poly()
        acc: dict = {}
        for m, c in self.terms.items():
            img = _mono_image(m, mapping, cache)
            for m2, c2 in img.terms.items():
                v = c * c2 if not isinstance(c2, AffineForm) else c2 * c
                acc[m2] = acc[m2] + v if m2 in acc else v
        out = Poly(acc)
        return out

    def map_coefficients(self, fn: Callable) -> "Poly":
        return Poly({m: fn(c) for m, c in self.terms.items()})

    def evaluate(self, env: Mapping[str, object]):
        """Evaluate with numbers; exact when ``env`` holds Fractions/ints."""
        total = 0
        for m, c in self.terms.items():
            term = c
            for v, e in m:
                term = term * env[v] ** e
            total = total + term
        return total

    def evaluate_float(self, env: Mapping[str, float]) -> float:
        total = 0.0
        for m, c in self.terms.items():
            term = float(c)
            for v, e in m:
                term *= env[v] ** e
            total += term
        return total

    def compile(self, variables: list[str]) -> Callable:
        """Compile to a fast float function taking positional arguments."""
        if self.is_parametric():
            raise TypeError("cannot compile a parametric polynomial")
        names = {v: f"a{i}" for i, v in enumerate(variables)}
        parts = []
        for m, c in self.terms.items():
            factors = [repr(float(c))]
            for v, e in m:
                factors.append(names[v] if e == 1 else f"{names[v]}**{e}")
            parts.append("*".join(factors))
        body = " + ".join(parts) if parts else "0.0"
        src = f"lambda {', '.join(names[v] for v in variables) or '*_'}: {body}"
        return eval(src, {})  # noqa: S307 - generated from numeric literals only

    def __repr__(self):
        return f"Poly({format_poly(self)})"

    def __str__(self):
        return format_poly(self)


def _mono_image(m: Monomial, mapping: Mapping[str, Poly], cache: dict | None) -> Poly:
    if cache is not None and m in cache:
        return cache[m]
    img = Poly.const(1)
    for v, e in m:
        base = mapping.get(v)
        if base is None:
            base = Poly.var(v)
        img = img * (base ** e)
    if cache is not None:
        cache[m] = img
    return img


def _fmt_coef(c) -> str:
    if isinstance(c, AffineForm):
        return f"({c!r})"
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def format_poly(p: Poly) -> str:
    """Deterministic textual form, parseable by the expression parser."""
    if not p.terms:
        return "0"
    items = sorted(p.terms.items(), key=lambda kv: (-mono_degree(kv[0]), kv[0]))
    out = []
    for i, (m, c) in enumerate(items):
        neg = not isinstance(c, AffineForm) and c < 0
        mag = -c if neg else c
        if m and not isinstance(mag, AffineForm) and mag == 1:
            body = mono_str(m)
        elif m:
            body = f"{_fmt_coef(mag)}*{mono_str(m)}"
        else:
            body = _fmt_coef(mag)
        if i == 0:
            out.append(f"-{body}" if neg else body)
        else:
            out.append(f" - {body}" if neg else f" + {body}")
    return "".join(out)


def linear_parts(p: Poly, variables: list[str]) -> tuple[list[Fraction], Fraction]:
    """Coefficient vector and constant of a degree <= 1 polynomial."""
    if p.degree() > 1:
        raise ValueError(f"polynomial {p} is not linear")
    coeffs = [p.coefficient(((v, 1),)) for v in variables]
    return coeffs, p.constant_term()
