"""Seeded Monte Carlo estimation of product-system events.

Runs use float arithmetic through compiled guards and updates.  Once a run
reaches the terminal location its valuation is frozen, so the automaton
and counter evolve deterministically on a constant letter; the outcome is
then decided exactly by following that deterministic cycle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import conditions as cnd
from .dra import Dra
from .product import FOV, ProductSystem
from .pts import Pts

COUNTER, ACCEPT, FORMULA = "counter", "accept", "formula"


class HorizonWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    samples: int = 100_000
    horizon: int = 200
    seed: int = 0
    event: str = ACCEPT

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.event not in (COUNTER, ACCEPT, FORMULA):
            raise ValueError(f"unknown event {self.event!r}")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    samples: int
    undecided: int  # runs still outside the terminal location at the horizon
    heuristic: bool

    def as_dict(self) -> dict:
        return {"estimate": self.value, "stderr": self.stderr, "samples": self.samples,
                "undecided": self.undecided, "heuristic": self.heuristic}


_OPS = {cnd.GE: lambda v: v >= 0, cnd.GT: lambda v: v > 0, cnd.EQ: lambda v: v == 0}


def _compile_conj(conj, variables):
    return [(c.poly.compile(variables), _OPS[c.op]) for c in conj]


def _compile_formula(f, variables) -> Callable:
    cells = [_compile_conj(conj, variables) for conj in cnd.dnf(f)]

    def holds(vals):
        return any(all(op(fn(*vals)) for fn, op in cell) for cell in cells)
    return holds


class CompiledPts:
    """Float executor for a PTS."""

    def __init__(self, pts: Pts):
        self.pts = pts
        variables = list(pts.variables)
        samples = [r for r, _ in pts.sample_vars]
        self.sample_dists = [d for _, d in pts.sample_vars]
        allv = variables + samples
        self.by_loc: dict = {}
        for loc in pts.locations:
            if loc == pts.out:
                continue
            entries = []
            for t in pts.transitions_from(loc):
                guard = _compile_formula(t.guard, variables)
                cum, forks = 0.0, []
                for f in t.forks:
                    cum += float(f.prob)
                    needed = set().union(*(p.variables() for _, p in f.update)) - set(variables)
                    idx = [i for i, r in enumerate(samples) if r in needed]
                    ups = [p.compile(allv) for _, p in f.update]
                    forks.append((cum, f.dest, ups, idx))
                entries.append((guard, forks))
            self.by_loc[loc] = entries

    def step(self, loc, vals, rng):
        for guard, forks in self.by_loc[loc]:
            if guard(vals):
                break
        else:
            raise ValueError(f"no enabled transition at {loc} with {vals}")
        u = rng.random()
        chosen = forks[-1]
        for fk in forks:
            if u < fk[0]:
                chosen = fk
                break
        _, dest, ups, idx = chosen
        rs = [0.0] * len(self.sample_dists)
        for i in idx:
            rs[i] = self.sample_dists[i].sample(rng)
        args = list(vals) + rs
        return dest, tuple(fn(*args) for fn in ups)


def _label_fn(dra: Dra, variables):
    tests = [(1 << i, _compile_conj((a.constraint,), variables)[0]) for i, a in enumerate(dra.aps)]

    def label(vals):
        m = 0
        for bit, (fn, op) in tests:
            if op(fn(*vals)):
                m |= bit
        return m
    return label


def _sample_initial(pts: Pts, rng) -> tuple:
    out = []
    for _, d in pts.init_spec.dists:
        out.append(d.sample(rng) if hasattr(d, "sample") else float(d))
    return tuple(out)


def _accepting(dra: Dra, inf: set) -> bool:
    return any(not (inf & p.E) and (inf & p.F) for p in dra.pairs)


def _terminal_accept(dra: Dra, q: int, mask: int) -> bool:
    seen: list = []
    while q not in seen:
        seen.append(q)
        q = dra._table[q, mask]
    return _accepting(dra, set(seen[seen.index(q):]))


def _terminal_counter_ok(psys: ProductSystem, q: int, l: int, mask: int) -> bool:
    seen = set()
    while (q, l) not in seen:
        seen.add((q, l))
        q = psys.dra._table[q, mask]
        l = psys.next_counter(q, l)
        if l >= psys.cap:
            return False
    return True


def simulate_event(psys: ProductSystem, cfg: SimConfig, formula: cnd.Formula | None = None) -> Estimate:
    """Estimate an event probability with a binomial standard error.

    ``counter``: the counter never reaches k+1.  ``accept``: the automaton
    run is Rabin-accepting.  ``formula``: ``formula`` holds at some step.
    Runs still undecided at the horizon are judged on their last quarter
    (accept) or as not violated so far (counter); such estimates are
    flagged heuristic.
    """
    pts, dra = psys.pts, psys.dra
    exe = CompiledPts(pts)
    variables = list(pts.variables)
    label = _label_fn(dra, variables)
    fholds = _compile_formula(formula, variables) if formula is not None else None
    if cfg.event == FORMULA and fholds is None:
        raise ValueError("formula event needs a formula")
    rng = np.random.default_rng(cfg.seed)
    hits = 0
    undecided = 0
    quarter = max(1, cfg.horizon // 4)
    checkpoints = []
    for i in range(cfg.samples):
        loc, vals = pts.init, _sample_initial(pts, rng)
        q, l = dra.initial, 0
        ok = None
        tail_q: set = set()
        for t in range(cfg.horizon):
            if cfg.event == FORMULA and fholds(vals):
                ok = True
                break
            if loc == pts.out:
                mask = label(vals)
                if cfg.event == ACCEPT:
                    ok = _terminal_accept(dra, q, mask)
                elif cfg.event == COUNTER:
                    ok = _terminal_counter_ok(psys, q, l, mask)
                else:
                    ok = False
                break
            q = dra._table[q, label(vals)]
            l = psys.next_counter(q, l)
            if cfg.event == COUNTER and l >= psys.cap:
                ok = False
                break
            loc, vals = exe.step(loc, vals, rng)
            if t >= cfg.horizon - quarter:
                tail_q.add(q)
        if ok is None:
            undecided += 1
            if cfg.event == ACCEPT:
                ok = _accepting(dra, tail_q)
            elif cfg.event == COUNTER:
                ok = True
            else:
                ok = False
        hits += bool(ok)
        if (i + 1) % max(1, cfg.samples // 4) == 0:
            checkpoints.append(hits / (i + 1))
    p = hits / cfg.samples
    se = math.sqrt(max(p * (1 - p), 0.0) / cfg.samples)
    if len(checkpoints) >= 4 and se > 0:
        drift = abs(checkpoints[-1] - checkpoints[-2])
        if undecided and drift > 3 * se:
            warnings.warn("horizon too small: estimate still moving", HorizonWarning, stacklevel=2)
    return Estimate(p, se, cfg.samples, undecided, undecided > 0)


def accept_system(pts: Pts, dra: Dra) -> ProductSystem:
    """A product system used only for acceptance/formula events (counter unused)."""
    return ProductSystem(pts, dra, frozenset(), FOV, 0)
