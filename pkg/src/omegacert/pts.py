"""Probabilistic transition systems and their executable semantics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import conditions as cnd
from .conditions import Constraint, Formula, TrueF
from .distributions import Distribution, make_distribution
from .poly import Poly, format_poly


class ModelError(ValueError):
    """A structurally invalid model (guards overlap, bad probabilities, ...)."""


@dataclass(frozen=True)
class Fork:
    prob: Fraction
    update: tuple  # ((var, Poly), ...) in program-variable order
    dest: str

    @property
    def update_map(self) -> dict[str, Poly]:
        return dict(self.update)


@dataclass(frozen=True)
class Transition:
    source: str
    guard: Formula
    forks: tuple

    def __post_init__(self):
        total = sum((f.prob for f in self.forks), Fraction(0))
        if total != 1:
            raise ModelError(f"fork probabilities out of {self.source} sum to {total}")
        for f in self.forks:
            if not 0 < f.prob <= 1:
                raise ModelError(f"fork probability {f.prob} outside (0, 1]")
        object.__setattr__(self, "guard_dnf", cnd.dnf(self.guard))


@dataclass(frozen=True)
class InitSpec:
    """Initial distribution ``D_0`` (per variable) and support polytope ``S_0``."""

    dists: tuple  # ((var, Distribution | Fraction), ...)
    support: tuple  # conjunction of Constraints

    def as_map(self) -> dict:
        return dict(self.dists)

    def point(self) -> dict[str, Fraction] | None:
        """The unique initial valuation, if every variable is a constant."""
        out = {}
        for v, d in self.dists:
            if isinstance(d, Distribution):
                return None
            out[v] = Fraction(d)
        return out


@dataclass(frozen=True)
class PtsState:
    loc: str
    vals: tuple

    def env(self, variables: Sequence[str]) -> dict:
        return dict(zip(variables, self.vals))


@dataclass(frozen=True)
class Branch:
    guard: Formula
    prob: Fraction
    update: tuple
    dest: str
    transition: int
    fork: int


@dataclass(frozen=True)
class Pts:
    locations: tuple
    init: str
    out: str
    variables: tuple
    sample_vars: tuple  # ((name, Distribution), ...)
    transitions: tuple
    invariants: tuple  # ((loc, Conj), ...)
    init_spec: InitSpec
    _by_source: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.init not in self.locations or self.out not in self.locations:
            raise ModelError("init/out locations must be declared")
        by_source: dict[str, list[int]] = {loc: [] for loc in self.locations}
        for i, t in enumerate(self.transitions):
            if t.source not in by_source:
                raise ModelError(f"transition from undeclared location {t.source}")
            if t.source == self.out:
                raise ModelError("the terminal location has no outgoing transitions")
            for f in t.forks:
                if f.dest not in by_source:
                    raise ModelError(f"fork to undeclared location {f.dest}")
                if [v for v, _ in f.update] != list(self.variables):
                    raise ModelError("each update must define every program variable")
            by_source[t.source].append(i)
        for loc in self.locations:
            if loc != self.out and not by_source[loc]:
                raise ModelError(f"location {loc} has no outgoing transition")
        object.__setattr__(self, "_by_source", by_source)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def sample_dists(self) -> dict[str, Distribution]:
        return dict(self.sample_vars)

    def invariant(self, loc: str) -> tuple:
        return dict(self.invariants).get(loc, ())

    def transitions_from(self, loc: str) -> list[Transition]:
        return [self.transitions[i] for i in self._by_source[loc]]

    def transition_indices(self, loc: str) -> list[int]:
        return list(self._by_source[loc])

    def identity_update(self) -> tuple:
        return tuple((v, Poly.var(v)) for v in self.variables)


def enabled_transition(pts: Pts, s: PtsState) -> Transition:
    """The unique transition whose guard the valuation satisfies."""
    if s.loc == pts.out:
        raise ModelError("terminal state has no transition")
    env = s.env(pts.variables)
    hits = [t for t in pts.transitions_from(s.loc) if t.guard.holds(env)]
    if len(hits) != 1:
        raise ModelError(
            f"{len(hits)} enabled transitions at {s.loc} with {env} (no-demonic restriction violated)"
        )
    return hits[0]


def apply_update(update: tuple, env: Mapping) -> tuple:
    return tuple(p.evaluate(env) for _, p in update)


def concrete_step(pts: Pts, s: PtsState, rng: np.random.Generator) -> PtsState:
    """One step of the PTS semantics; terminal states self-loop."""
    if s.loc == pts.out:
        return s
    t = enabled_transition(pts, s)
    u = rng.random()
    acc = 0.0
    fork = t.forks[-1]
    for f in t.forks:
        acc += float(f.prob)
        if u < acc:
            fork = f
            break
    env = s.env(pts.variables)
    needed = set().union(*(p.variables() for _, p in fork.update)) - set(pts.variables)
    dists = pts.sample_dists
    for r in sorted(needed):
        env[r] = dists[r].sample(rng)
    return PtsState(fork.dest, apply_update(fork.update, env))


def symbolic_branches(pts: Pts, loc: str) -> list[Branch]:
    """Flat list of (guard, probability, update, destination) out of ``loc``."""
    if loc not in pts.locations:
        raise ModelError(f"unknown location {loc}")
    if loc == pts.out:
        return [Branch(TrueF(), Fraction(1), pts.identity_update(), pts.out, -1, 0)]
    out = []
    for ti in pts.transition_indices(loc):
        t = pts.transitions[ti]
        for fi, f in enumerate(t.forks):
            out.append(Branch(t.guard, f.prob, f.update, f.dest, ti, fi))
    return out


def check_guards_partition(pts: Pts, loc: str, samples: int, rng: np.random.Generator,
                           box: Mapping[str, tuple] | None = None) -> int:
    """Sample valuations at ``loc``; return how many did not enable exactly one guard."""
    bad = 0
    ts = pts.transitions_from(loc)
    box = box or {}
    for _ in range(samples):
        env = {}
        for v in pts.variables:
            lo, hi = box.get(v, (-5, 5))
            # Mix integer lattice points (where equality guards bite) with reals.
            env[v] = float(rng.integers(int(lo), int(hi) + 1)) if rng.random() < 0.5 else float(
                rng.uniform(float(lo), float(hi)))
        hits = sum(1 for t in ts if t.guard.holds(env))
        bad += hits != 1
    return bad


# -- text format ----------------------------------------------------------


def format_formula(f: Formula) -> str:
    if isinstance(f, cnd.TrueF):
        return "true"
    if isinstance(f, cnd.FalseF):
        return "false"
    if isinstance(f, cnd.Atom):
        op = {cnd.GE: ">=", cnd.GT: ">", cnd.EQ: "="}[f.c.op]
        return f"{format_poly(f.c.poly)} {op} 0"
    if isinstance(f, cnd.Not):
        return f"not ({format_formula(f.f)})"
    if isinstance(f, cnd.And):
        return " and ".join(f"({format_formula(p)})" for p in f.parts) if f.parts else "true"
    if isinstance(f, cnd.Or):
        return " or ".join(f"({format_formula(p)})" for p in f.parts) if f.parts else "false"
    raise TypeError(f)


def _format_dist(d) -> object:
    if isinstance(d, Distribution):
        return str(d)
    return str(Fraction(d))


def print_pts(pts: Pts) -> str:
    """Serialize to the JSON-based PTS text format."""
    doc = {
        "locations": list(pts.locations),
        "init": pts.init,
        "out": pts.out,
        "variables": list(pts.variables),
        "samples": {r: str(d) for r, d in pts.sample_vars},
        "init_spec": {
            "dists": {v: _format_dist(d) for v, d in pts.init_spec.dists},
            "support": [format_formula(cnd.Atom(c)) for c in pts.init_spec.support],
        },
        "invariants": {loc: [format_formula(cnd.Atom(c)) for c in conj] for loc, conj in pts.invariants},
        "transitions": [
            {
                "source": t.source,
                "guard": format_formula(t.guard),
                "forks": [
                    {"prob": str(f.prob), "dest": f.dest,
                     "update": {v: format_poly(p) for v, p in f.update}}
                    for f in t.forks
                ],
            }
            for t in pts.transitions
        ],
    }
    return json.dumps(doc, indent=2)


def parse_pts(text: str) -> Pts:
    """Inverse of :func:`print_pts`."""
    from .ppl import parse_condition, parse_distribution, parse_expression

    doc = json.loads(text)

    def dist_or_const(s: str):
        try:
            return Fraction(s)
        except ValueError:
            return parse_distribution(s)

    def conj_of(items):
        out = []
        for s in items:
            for c in cnd.dnf(parse_condition(s))[0]:
                out.append(c)
        return cnd.conj_and(out)

    transitions = []
    for t in doc["transitions"]:
        forks = tuple(
            Fork(Fraction(f["prob"]),
                 tuple((v, parse_expression(f["update"][v])) for v in doc["variables"]),
                 f["dest"])
            for f in t["forks"]
        )
        transitions.append(Transition(t["source"], parse_condition(t["guard"]), forks))
    init_spec = InitSpec(
        tuple((v, dist_or_const(s)) for v, s in doc["init_spec"]["dists"].items()),
        conj_of(doc["init_spec"]["support"]),
    )
    return Pts(
        locations=tuple(doc["locations"]),
        init=doc["init"],
        out=doc["out"],
        variables=tuple(doc["variables"]),
        sample_vars=tuple((r, parse_distribution(s)) for r, s in doc["samples"].items()),
        transitions=tuple(transitions),
        invariants=tuple((loc, conj_of(items)) for loc, items in doc["invariants"].items()),
        init_spec=init_spec,
    )


__all__ = [
    "Branch", "Fork", "InitSpec", "ModelError", "Pts", "PtsState", "Transition",
    "apply_update", "check_guards_partition", "concrete_step", "enabled_transition",
    "make_distribution", "parse_pts", "print_pts", "symbolic_branches",
]
