"""FOV and IOV products of a PTS with a DRA and a saturating tick counter."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from . import conditions as cnd
from .dra import Dra, dra_step, guard_to_formula, label_mask
from .pts import Pts, PtsState, concrete_step, symbolic_branches

FOV, IOV = "FOV", "IOV"


class ProductError(ValueError):
    pass


@dataclass(frozen=True)
class ProductState:
    s: PtsState
    q: int
    l: int


@dataclass(frozen=True)
class ProductSystem:
    pts: Pts
    dra: Dra
    U: frozenset
    mode: str
    k: int

    def __post_init__(self):
        if self.mode not in (FOV, IOV):
            raise ProductError(f"mode must be {FOV} or {IOV}")
        if self.k < 0:
            raise ProductError("k must be >= 0")
        object.__setattr__(self, "U", frozenset(self.U))
        if any(q not in self.dra.states for q in self.U):
            raise ProductError("tracked set must be a subset of the automaton states")

    @property
    def cap(self) -> int:
        return self.k + 1

    def next_counter(self, q2: int, l: int) -> int:
        if self.mode == FOV:
            return min(l + 1, self.cap) if q2 in self.U else l
        return 0 if q2 in self.U else min(l + 1, self.cap)

    def threshold_states(self) -> frozenset:
        """Automaton states whose pieces carry the threshold condition at l = k+1."""
        if self.mode == FOV:
            return self.U
        return frozenset(self.dra.states) - self.U


def product_initial(psys: ProductSystem, v0: Mapping) -> ProductState:
    pts = psys.pts
    env = {v: Fraction(v0[v]) for v in pts.variables}
    if not cnd.conj_holds(pts.init_spec.support, env):
        raise ProductError(f"initial valuation {env} outside the declared support")
    return ProductState(PtsState(pts.init, tuple(env[v] for v in pts.variables)), psys.dra.initial, 0)


def product_step(psys: ProductSystem, X: ProductState, rng: np.random.Generator) -> ProductState:
    """The automaton reads the pre-step label, the counter follows the new state."""
    if X.l > psys.cap:
        raise ProductError("counter above k+1")
    env = X.s.env(psys.pts.variables)
    q2 = dra_step(psys.dra, X.q, label_mask(psys.dra, env))
    s2 = concrete_step(psys.pts, X.s, rng)
    return ProductState(s2, q2, psys.next_counter(q2, X.l))


@dataclass(frozen=True)
class ProductEdge:
    loc: str
    q: int
    l: int
    premise: cnd.Formula
    prob: Fraction
    update: tuple
    dest: str
    q2: int
    l2: int
    transition: int
    fork: int
    dra_edge: int


def symbolic_product_edges(psys: ProductSystem) -> list[ProductEdge]:
    """Every (location, state, counter, branch, automaton edge) combination.

    The premise is the location invariant, the transition guard and the
    automaton edge guard, all read on the pre-step valuation.
    """
    pts, dra = psys.pts, psys.dra
    aps = dra.ap_map()
    out = []
    for loc in pts.locations:
        inv = pts.invariant(loc)
        inv_f = cnd.And(tuple(cnd.Atom(c) for c in inv))
        branches = symbolic_branches(pts, loc)
        for q in dra.states:
            dra_edges = [(i, e) for i, e in enumerate(dra.edges) if e.src == q]
            for l in range(psys.cap + 1):
                for b in branches:
                    for ei, e in dra_edges:
                        premise = cnd.And((inv_f, b.guard, guard_to_formula(e.guard, aps)))
                        out.append(ProductEdge(
                            loc, q, l, premise, b.prob, b.update, b.dest,
                            e.dst, psys.next_counter(e.dst, l), b.transition, b.fork, ei,
                        ))
    return out


def premise_cells(premise: cnd.Formula) -> list[tuple]:
    """Closed, feasible conjunctive cells of a premise formula."""
    cells = []
    for conj in cnd.dnf(premise):
        if not cnd.feasible(conj):
            continue
        closed = cnd.close(conj)
        if closed not in cells:
            cells.append(closed)
    return cells
