"""Sampled re-check of a synthesized certificate's side conditions.

Independent of the LP encoding: expectations are computed by enumerating
forks and discrete outcomes, and by Gauss-Legendre quadrature for uniform
samples, then compared pointwise at random product states.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import ceil

import numpy as np
from scipy.optimize import linprog

from . import conditions as cnd
from .certgen import is_upper
from .distributions import Uniform
from .dra import label_mask
from .poly import Poly, linear_parts
from .product import ProductSystem
from .pts import Fork, Pts, PtsState, enabled_transition


@dataclass(frozen=True)
class MartingaleConfig:
    states: int = 1000
    seed: int = 0
    span: float = 20.0  # box width used for unbounded invariant directions
    integer_share: float = 0.5  # fraction of points rounded to the integer grid


@dataclass
class MartingaleReport:
    max_violation: float
    by_condition: dict = field(default_factory=dict)
    states_checked: int = 0
    worst: str = ""

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_violation <= tol


def invariant_box(pts: Pts, loc: str, span: float = 20.0) -> list[tuple[float, float]]:
    """Per-variable [lo, hi] of a location invariant by LP, widened by ``span`` when unbounded."""
    inv = pts.invariant(loc)
    variables = list(pts.variables)
    n = len(variables)
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for c in inv:
        if c.degree() > 1:
            continue
        coefs, const = linear_parts(c.poly, variables)
        row = [-float(a) for a in coefs]
        if c.op == cnd.EQ:
            A_eq.append([float(a) for a in coefs])
            b_eq.append(-float(const))
        else:
            A_ub.append(row)
            b_ub.append(float(const))
    kw = {}
    if A_ub:
        kw.update(A_ub=np.array(A_ub), b_ub=np.array(b_ub))
    if A_eq:
        kw.update(A_eq=np.array(A_eq), b_eq=np.array(b_eq))
    box = []
    for i in range(n):
        ends = []
        for sign in (1.0, -1.0):
            cost = np.zeros(n)
            cost[i] = sign
            res = linprog(cost, bounds=[(None, None)] * n, method="highs", **kw)
            ends.append(sign * res.fun if res.status == 0 else None)
        lo, hi = ends
        if lo is None and hi is None:
            lo, hi = -span / 2, span / 2
        elif lo is None:
            lo = hi - span
        elif hi is None:
            hi = lo + span
        box.append((lo, hi))
    return box


def _nodes(dist, d: int):
    if isinstance(dist, Uniform):
        xs, ws = np.polynomial.legendre.leggauss(max(1, ceil((2 * d + 1) / 2)))
        a, b = float(dist.a), float(dist.b)
        return [(w / 2, a + (b - a) * (x + 1) / 2) for x, w in zip(xs, ws)]
    return [(float(p), float(v)) for v, p in dist.outcomes()]


class _Evaluator:
    def __init__(self, cert, psys: ProductSystem, degree_hint: int):
        self.psys = psys
        pts = psys.pts
        self.variables = list(pts.variables)
        self.samples = [r for r, _ in pts.sample_vars]
        self.nodes = {r: _nodes(dist, max(degree_hint, 1)) for r, dist in pts.sample_vars}
        self.fn = {key: p.compile(self.variables) for key, p in cert.pieces.items()}
        self.update_fns: dict = {}

    def eta(self, loc, q, l, vals) -> float:
        return float(self.fn[loc, q, l](*vals))

    def _update(self, fork):
        key = id(fork)
        hit = self.update_fns.get(key)
        if hit is None:
            allv = self.variables + self.samples
            mapping = dict(fork.update)
            fns = [mapping.get(v, Poly.var(v)).compile(allv) for v in self.variables]
            used = set().union(*(p.variables() for p in mapping.values())) if mapping else set()
            rs = [r for r in self.samples if r in used]
            hit = self.update_fns[key] = (fns, rs)
        return hit

    def expected_next(self, loc, q, l, vals) -> float:
        psys = self.psys
        env = dict(zip(self.variables, vals))
        if loc == psys.pts.out:
            forks = [Fork(Fraction(1), psys.pts.identity_update(), loc)]
        else:
            forks = enabled_transition(psys.pts, PtsState(loc, tuple(vals))).forks
        q2 = psys.dra._table[q, label_mask(psys.dra, env)]
        l2 = psys.next_counter(q2, l)
        total = 0.0
        for fork in forks:
            fns, rs = self._update(fork)
            acc = 0.0
            for combo in itertools.product(*(self.nodes[r] for r in rs)):
                w = 1.0
                rvals = dict.fromkeys(self.samples, 0.0)
                for r, (wr, x) in zip(rs, combo):
                    w *= wr
                    rvals[r] = x
                args = list(vals) + [rvals[r] for r in self.samples]
                nxt = [f(*args) for f in fns]
                acc += w * self.eta(fork.dest, q2, l2, nxt)
            total += float(fork.prob) * acc
        return total


def _in_invariant(pts, loc, vals, tol=1e-9) -> bool:
    env = dict(zip(pts.variables, vals))
    for c in pts.invariant(loc):
        v = float(c.poly.evaluate_float(env))
        if c.op == cnd.EQ and abs(v) > tol:
            return False
        if c.op != cnd.EQ and v < -tol:
            return False
    return True


def sample_states(psys: ProductSystem, cfg: MartingaleConfig):
    """Random (loc, q, l, valuation) with l in [0, k+1] and the valuation in the invariant."""
    pts = psys.pts
    rng = np.random.default_rng(cfg.seed)
    boxes = {loc: invariant_box(pts, loc, cfg.span) for loc in pts.locations}
    out = []
    attempts = 0
    while len(out) < cfg.states and attempts < 50 * cfg.states:
        attempts += 1
        loc = pts.locations[rng.integers(len(pts.locations))]
        q = psys.dra.states[rng.integers(psys.dra.n_states)]
        l = int(rng.integers(psys.cap + 1))
        vals = [lo + (hi - lo) * rng.random() for lo, hi in boxes[loc]]
        if rng.random() < cfg.integer_share:
            vals = [min(max(round(v), lo), hi) for v, (lo, hi) in zip(vals, boxes[loc])]
        if _in_invariant(pts, loc, vals):
            out.append((loc, q, l, tuple(float(v) for v in vals)))
    return out


def martingale_check(cert, psys: ProductSystem, cfg: MartingaleConfig = MartingaleConfig()) -> MartingaleReport:
    """Largest violation of the mode's conditions over sampled product states."""
    upper = is_upper(cert.mode)
    ev = _Evaluator(cert, psys, cert.d)
    pts = psys.pts
    worst = {"drift": 0.0, "nonneg": 0.0, "le_one": 0.0, "threshold": 0.0, "init": 0.0}
    where = {}

    def note(kind, amount, desc):
        if amount > worst[kind]:
            worst[kind] = amount
            where[kind] = desc

    states = sample_states(psys, cfg)
    thresholds = psys.threshold_states()
    for loc, q, l, vals in states:
        eta = ev.eta(loc, q, l, vals)
        desc = f"{loc},{q},{l} at {vals}"
        note("nonneg", -eta, desc)
        if upper:
            note("le_one", eta - 1, desc)
        if l == psys.cap and q in thresholds:
            if upper:
                if cert.lam is not None and cert.lam < 1:
                    note("threshold", eta - float(cert.lam), desc)
            else:
                note("threshold", 1 - eta, desc)
        if l <= psys.k:
            nxt = ev.expected_next(loc, q, l, vals)
            note("drift", eta - float(cert.alpha) * nxt if upper else nxt - eta, desc)
    # initial condition at the initial point or at sampled support points
    point = pts.init_spec.point()
    init_vals = [tuple(float(point[v]) for v in pts.variables)] if point is not None else [
        vals for loc, _, _, vals in states if loc == pts.init and cnd.conj_holds(pts.init_spec.support, dict(zip(pts.variables, map(Fraction, vals))))
    ]
    for vals in init_vals:
        eta0 = ev.eta(pts.init, psys.dra.initial, 0, vals)
        g = float(cert.gamma)
        note("init", (g - eta0) if upper else (eta0 - g), f"init at {vals}")
    top = max(worst, key=worst.get)
    return MartingaleReport(max(0.0, worst[top]), worst, len(states), where.get(top, ""))


def corrupt(cert, key=None, monomial=(), delta=Fraction(1, 10)):
    """Copy of ``cert`` with one coefficient shifted (negative control)."""
    pieces = dict(cert.pieces)
    key = key or next(iter(sorted(pieces)))
    p = pieces[key]
    terms = dict(p.terms)
    terms[monomial] = terms.get(monomial, 0) + Fraction(delta)
    pieces[key] = Poly(terms)
    return replace(cert, pieces=pieces)


__all__ = ["MartingaleConfig", "MartingaleReport", "corrupt", "invariant_box", "martingale_check", "sample_states"]
