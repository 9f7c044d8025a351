"""Property-level bounds from per-pair certificates, posterior ratios and DRA conjunction."""

from __future__ import annotations

import itertools
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from .certgen import LOWER_FOV, LOWER_IOV, UPPER_FOV, UPPER_IOV
from .dra import Dra, Edge, GAnd, dra_step, guard_holds, make_dra
from .product import FOV, IOV, ProductSystem
from .pts import Pts
from .solver import DEFAULT_ALPHA_GRID, OPTIMAL, synthesize_best

NO_CERTIFICATE = "no certificate found"


class TpdError(ValueError):
    pass


@dataclass
class BoundInterval:
    lower: float
    upper: float
    status: str = "ok"
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        lo = min(max(float(self.lower), 0.0), 1.0)
        hi = min(max(float(self.upper), 0.0), 1.0)
        if lo > hi + 1e-12:
            # reported, never swapped
            self.notes.append(f"inconsistent bounds: lower {lo} above upper {hi}")
            if self.status == "ok":
                self.status = "inconsistent"
        self.lower, self.upper = lo, hi

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "status": self.status,
                "provenance": self.provenance, "notes": list(self.notes)}


@dataclass
class VerificationTask:
    pts: Pts
    dra: Dra
    k: int = 2
    degree_fin: int = 2  # degree of the persistence-side (FOV) templates
    degree_inf: int = 2  # degree of the recurrence-side (IOV) templates
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    lam: Fraction = Fraction(1)
    relaxation_degree: int | None = None
    conservative: bool = False


@dataclass
class PairReport:
    index: int
    l_fin: float
    u_fin: float
    l_inf: float
    u_inf: float
    lower: float
    upper: float
    solves: dict = field(default_factory=dict)


@dataclass
class PropertyReport:
    interval: BoundInterval
    pairs: list
    seconds: float


def _solve_side(task: VerificationTask, U, kind, mode, degree) -> tuple[float | None, dict]:
    psys = ProductSystem(task.pts, task.dra, frozenset(U), kind, task.k)
    t0 = time.perf_counter()
    out = synthesize_best(psys, mode, degree, task.alpha_grid, task.lam, task.relaxation_degree)
    info = {"mode": mode, "d": degree, "k": task.k, "status": out.status,
            "seconds": round(time.perf_counter() - t0, 3), "lp": out.lp}
    if out.status != OPTIMAL:
        return None, info
    cert = out.certificate
    if cert.alpha is not None:
        info["alpha"] = str(cert.alpha)
        info["lambda"] = str(cert.lam)
    info["gamma"] = float(cert.gamma)
    info["certificate"] = cert
    return float(cert.bound), info


def combine_pair(l_fin, l_inf, u_fin, u_inf, conservative=False) -> tuple[float, float]:
    lower = max(0.0, l_fin + l_inf - 1) if conservative else l_fin * l_inf
    return lower, u_fin * u_inf


def combine_pairs(pairs: list[tuple[float, float]]) -> tuple[float, float]:
    """Lower: the best single pair.  Upper: union bound over pairs."""
    return max(lo for lo, _ in pairs), min(1.0, sum(hi for _, hi in pairs))


def verify_property(task: VerificationTask) -> PropertyReport:
    """Interval for the probability that the DRA accepts the program's run."""
    if not task.dra.pairs:
        raise ValueError("automaton needs at least one Rabin pair")
    t0 = time.perf_counter()
    reports = []
    found = False
    for i, pair in enumerate(task.dra.pairs):
        solves = {}
        if pair.E:
            l_fin, solves["lower_fin"] = _solve_side(task, pair.E, FOV, LOWER_FOV, task.degree_fin)
            u_fin, solves["upper_fin"] = _solve_side(task, pair.E, FOV, UPPER_FOV, task.degree_fin)
            found |= l_fin is not None or u_fin is not None
        else:
            l_fin = u_fin = 1.0
        l_inf, solves["lower_inf"] = _solve_side(task, pair.F, IOV, LOWER_IOV, task.degree_inf)
        u_inf, solves["upper_inf"] = _solve_side(task, pair.F, IOV, UPPER_IOV, task.degree_inf)
        found |= l_inf is not None or u_inf is not None
        l_fin = 0.0 if l_fin is None else l_fin
        l_inf = 0.0 if l_inf is None else l_inf
        u_fin = 1.0 if u_fin is None else u_fin
        u_inf = 1.0 if u_inf is None else u_inf
        lo, hi = combine_pair(l_fin, l_inf, u_fin, u_inf, task.conservative)
        reports.append(PairReport(i, l_fin, u_fin, l_inf, u_inf, lo, hi, solves))
    seconds = time.perf_counter() - t0
    if not found:
        return PropertyReport(BoundInterval(0.0, 1.0, NO_CERTIFICATE), reports, seconds)
    lo, hi = combine_pairs([(r.lower, r.upper) for r in reports])
    notes = []
    if task.conservative:
        notes.append("pair lower bound uses max(0, l_fin + l_inf - 1)")
    else:
        notes.append("pair lower bound uses l_fin * l_inf; --conservative gives max(0, l_fin + l_inf - 1)")
    if len(reports) > 1:
        notes.append("multi-pair combination: lower = max over pairs, upper = min(1, sum over pairs)")
    prov = {"k": task.k, "E.d": task.degree_fin, "F.d": task.degree_inf,
            "pairs": [{key: {k: v for k, v in s.items() if k not in ("certificate", "lp")} for key, s in r.solves.items()}
                      for r in reports]}
    return PropertyReport(BoundInterval(lo, hi, "ok", prov, notes), reports, seconds)


def compute_tpd(numerator: BoundInterval, denominator: BoundInterval) -> BoundInterval:
    """Interval for P[phi and psi] / P[psi] from intervals on both."""
    l_n, u_n = numerator.lower, numerator.upper
    l_d, u_d = denominator.lower, denominator.upper
    if u_d <= 0:
        raise TpdError("posterior undefined: denominator certified zero")
    notes = []
    if l_d <= 0:
        warnings.warn("denominator lower bound is 0; posterior may not be integrable", RuntimeWarning, stacklevel=2)
        notes.append("denominator lower bound is 0")
        upper = 1.0
    else:
        upper = min(1.0, u_n / l_d)
    return BoundInterval(l_n / u_d, upper, "ok",
                         {"numerator": [l_n, u_n], "denominator": [l_d, u_d]}, notes)


# -- conjunction of automata ------------------------------------------------


class ConjunctionError(ValueError):
    pass


def _is_buchi(d: Dra) -> bool:
    return len(d.pairs) == 1 and not d.pairs[0].E


def conjoin_dras(a: Dra, b: Dra) -> Dra:
    """Synchronous product accepting the intersection of both languages.

    One side must be a single pair with empty persistence set (a Buchi
    condition).  The other side's pairs are kept, each with a flag that
    alternates between waiting for its recurrence set and for the Buchi set.
    """
    if _is_buchi(a) and a.pairs[0].F >= set(a.states):
        a, b = b, a
    if not _is_buchi(b):
        if _is_buchi(a):
            a, b = b, a
        else:
            raise ConjunctionError(
                "conjunction needs one automaton with a single pair and empty E; "
                "supply a hand-built conjunction DRA instead"
            )
    aps = list(a.aps)
    names = {ap.name: ap for ap in aps}
    for ap in b.aps:
        if ap.name in names:
            if names[ap.name].constraint != ap.constraint:
                raise ConjunctionError(f"proposition {ap.name} defined differently in the two automata")
        else:
            aps.append(ap)
            names[ap.name] = ap
    F_b = b.pairs[0].F
    trivial = F_b >= set(b.states)
    M = len(a.pairs)

    def next_flags(flags, qa, qb):
        out = []
        for f, p in zip(flags, a.pairs):
            if f == 0 and qa in p.F:
                out.append(1)
            elif f == 1 and qb in F_b:
                out.append(0)
            else:
                out.append(f)
        return tuple(out)

    # explore reachable product states from the initial one
    start = (a.initial, b.initial, tuple(0 for _ in range(M)) if not trivial else ())
    index = {start: 0}
    order = [start]
    edges = []
    i = 0
    while i < len(order):
        qa, qb, flags = order[i]
        f2 = flags if trivial else next_flags(flags, qa, qb)
        for ea in a.edges_from(qa):
            for eb in b.edges_from(qb):
                tgt = (ea.dst, eb.dst, f2)
                if tgt not in index:
                    index[tgt] = len(order)
                    order.append(tgt)
                edges.append((i, GAnd((ea.guard, eb.guard)), index[tgt]))
        i += 1
    pairs = []
    for j, p in enumerate(a.pairs):
        E = frozenset(n for n, (qa, _, _) in enumerate(order) if qa in p.E)
        if trivial:
            F = frozenset(n for n, (qa, _, _) in enumerate(order) if qa in p.F)
        else:
            F = frozenset(n for n, (_, qb, fl) in enumerate(order) if fl[j] == 1 and qb in F_b)
        # a state in both sets is never visited infinitely often by an accepted run
        pairs.append((E, F - E))
    # drop edges whose joint guard is unsatisfiable
    kept = [Edge(s, g, d) for s, g, d in edges if _satisfiable(g, [ap.name for ap in aps])]
    ltl = f"({a.ltl}) & ({b.ltl})" if a.ltl and b.ltl else ""
    return make_dra(aps, len(order), 0, kept, pairs, ltl)


def _satisfiable(g, names) -> bool:
    for bits in itertools.product((False, True), repeat=len(names)):
        if guard_holds(g, frozenset(n for n, on in zip(names, bits) if on)):
            return True
    return False


def lasso_accepts(d: Dra, prefix, cycle) -> bool:
    """Acceptance of the ultimately periodic word prefix . cycle^omega."""
    if not cycle:
        raise ValueError("cycle must be non-empty")
    q = d.initial
    for letter in prefix:
        q = dra_step(d, q, letter)
    seen = {}
    trace = []
    while q not in seen:
        seen[q] = len(trace)
        visited = []
        for letter in cycle:
            visited.append(q)
            q = dra_step(d, q, letter)
        trace.append(visited)
    inf = set().union(*trace[seen[q]:])
    return any(not (inf & p.E) and (inf & p.F) for p in d.pairs)


__all__ = [
    "BoundInterval", "ConjunctionError", "PairReport", "PropertyReport", "TpdError", "VerificationTask",
    "combine_pair", "combine_pairs", "compute_tpd", "conjoin_dras", "lasso_accepts", "verify_property",
]
