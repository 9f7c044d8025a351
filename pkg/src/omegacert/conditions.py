"""Polynomial comparisons, boolean guard formulas and their DNF.

Atomic comparisons are normalized to ``p >= 0``, ``p > 0`` or ``p == 0``.
Execution semantics keep strict comparisons strict; :func:`close` turns a
conjunction into closed premises (``p > 0`` becomes ``p >= 0``), which only
enlarges the premise set and is therefore sound for entailment encoding.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .poly import Poly, format_poly, mono_degree

GE, GT, EQ = ">=", ">", "=="


def _normalize(p: Poly, op: str) -> Poly:
    if p.is_zero() or p.is_constant():
        return p
    lead_m = min(p.terms, key=lambda m: (-mono_degree(m), m))
    lead = p.terms[lead_m]
    scale = abs(lead)
    if op == EQ and lead < 0:
        scale = -scale
    return p * (1 / scale)


@dataclass(frozen=True)
class Constraint:
    """Atomic comparison ``poly op 0``."""

    poly: Poly
    op: str

    @classmethod
    def make(cls, poly: Poly, op: str) -> "Constraint":
        if op not in (GE, GT, EQ):
            raise ValueError(f"unknown comparison {op!r}")
        return cls(_normalize(poly, op), op)

    @classmethod
    def compare(cls, lhs: Poly, cmp: str, rhs: Poly) -> "Formula":
        """Build a formula for ``lhs cmp rhs`` with any of the six comparisons."""
        if cmp == ">=":
            return Atom(cls.make(lhs - rhs, GE))
        if cmp == ">":
            return Atom(cls.make(lhs - rhs, GT))
        if cmp == "<=":
            return Atom(cls.make(rhs - lhs, GE))
        if cmp == "<":
            return Atom(cls.make(rhs - lhs, GT))
        if cmp in ("=", "=="):
            return Atom(cls.make(lhs - rhs, EQ))
        if cmp in ("!=", "<>"):
            return Not(Atom(cls.make(lhs - rhs, EQ)))
        raise ValueError(f"unknown comparison {cmp!r}")

    def negate(self) -> list["Constraint"]:
        """Disjuncts of the negation."""
        if self.op == GE:
            return [Constraint.make(-self.poly, GT)]
        if self.op == GT:
            return [Constraint.make(-self.poly, GE)]
        return [Constraint.make(self.poly, GT), Constraint.make(-self.poly, GT)]

    def closed(self) -> "Constraint":
        return Constraint(self.poly, GE) if self.op == GT else self

    def holds(self, env: Mapping[str, object]) -> bool:
        v = self.poly.evaluate(env)
        if self.op == GE:
            return v >= 0
        if self.op == GT:
            return v > 0
        return v == 0

    def variables(self) -> set[str]:
        return self.poly.variables()

    def degree(self) -> int:
        return self.poly.degree()

    def closed_generators(self) -> list[Poly]:
        """Polynomials that are >= 0 on the closure of this constraint."""
        c = self.closed()
        if c.op == EQ:
            return [c.poly, -c.poly]
        return [c.poly]

    def __str__(self):
        return f"{format_poly(self.poly)} {self.op} 0"


class Formula:
    """Boolean combination of atomic constraints."""

    def holds(self, env) -> bool:
        raise NotImplementedError

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class TrueF(Formula):
    def holds(self, env):
        return True

    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def holds(self, env):
        return False

    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Atom(Formula):
    c: Constraint

    def holds(self, env):
        return self.c.holds(env)

    def __str__(self):
        return str(self.c)


@dataclass(frozen=True)
class Not(Formula):
    f: Formula

    def holds(self, env):
        return not self.f.holds(env)

    def __str__(self):
        return f"!({self.f})"


@dataclass(frozen=True)
class And(Formula):
    parts: tuple

    def holds(self, env):
        return all(p.holds(env) for p in self.parts)

    def __str__(self):
        return " & ".join(f"({p})" for p in self.parts) or "true"


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple

    def holds(self, env):
        return any(p.holds(env) for p in self.parts)

    def __str__(self):
        return " | ".join(f"({p})" for p in self.parts) or "false"


Conj = tuple  # tuple[Constraint, ...], sorted and deduplicated


def _conj(items: Iterable[Constraint]) -> Conj:
    return tuple(sorted(set(items), key=str))


def dnf(f: Formula, positive: bool = True) -> list[Conj]:
    """Disjunctive normal form over atomic constraints.

    Negation is pushed to the atoms, where a negated equality splits into
    two strict disjuncts.
    """
    if isinstance(f, TrueF):
        return [()] if positive else []
    if isinstance(f, FalseF):
        return [] if positive else [()]
    if isinstance(f, Atom):
        if positive:
            return [(f.c,)]
        return [(c,) for c in f.c.negate()]
    if isinstance(f, Not):
        return dnf(f.f, not positive)
    if isinstance(f, (And, Or)):
        conjunctive = isinstance(f, And) == positive
        if conjunctive:
            acc: list[Conj] = [()]
            for p in f.parts:
                sub = dnf(p, positive)
                acc = [_conj(a + b) for a in acc for b in sub]
            return _dedup(acc)
        out: list[Conj] = []
        for p in f.parts:
            out.extend(dnf(p, positive))
        return _dedup(out)
    raise TypeError(f"not a formula: {f!r}")


def _dedup(conjs: list[Conj]) -> list[Conj]:
    seen = set()
    out = []
    for c in conjs:
        c = _conj(c)
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def conj_and(*conjs: Sequence[Constraint]) -> Conj:
    items: list[Constraint] = []
    for c in conjs:
        items.extend(c)
    return _conj(items)


def close(conj: Sequence[Constraint]) -> Conj:
    return _conj(c.closed() for c in conj)


def conj_holds(conj: Sequence[Constraint], env) -> bool:
    return all(c.holds(env) for c in conj)


def conj_str(conj: Sequence[Constraint]) -> str:
    return " & ".join(str(c) for c in conj) if conj else "true"


# -- feasibility ----------------------------------------------------------


def is_linear(conj: Sequence[Constraint]) -> bool:
    return all(c.degree() <= 1 for c in conj)


@functools.lru_cache(maxsize=65536)
def _feasible_cached(conj: Conj) -> bool:
    for c in conj:
        if c.poly.is_constant():
            v = c.poly.constant_term()
            ok = v >= 0 if c.op == GE else (v > 0 if c.op == GT else v == 0)
            if not ok:
                return False
    conj = tuple(c for c in conj if not c.poly.is_constant())
    if not conj:
        return True
    if not is_linear(conj):
        return True
    variables = sorted(set().union(*(c.variables() for c in conj)))
    n = len(variables)
    # Variables v and slack t: maximize t with strict rows  -a.v - b + t <= 0.
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    has_strict = False
    for c in conj:
        coeffs = [float(c.poly.coefficient(((v, 1),))) for v in variables]
        const = float(c.poly.constant_term())
        if c.op == EQ:
            a_eq.append(coeffs + [0.0])
            b_eq.append(-const)
        elif c.op == GE:
            a_ub.append([-x for x in coeffs] + [0.0])
            b_ub.append(const)
        else:
            has_strict = True
            a_ub.append([-x for x in coeffs] + [1.0])
            b_ub.append(const)
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = linprog(
        cost,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return False
    if res.status != 0:
        return True
    if has_strict:
        return -res.fun > 1e-9
    return True


def feasible(conj: Sequence[Constraint]) -> bool:
    """Real satisfiability of a conjunction, exact in the strict sense.

    Linear conjunctions are decided by LP (maximizing the slack of strict
    rows).  Nonlinear ones are conservatively reported feasible.
    """
    return _feasible_cached(_conj(conj))


def as_fraction_env(env: Mapping[str, object]) -> dict[str, Fraction]:
    return {k: Fraction(v) for k, v in env.items()}
