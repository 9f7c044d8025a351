"""Exact finite Markov chains for discrete, finite-domain programs.

Used as ground truth: all probabilities are rationals, reachability is
solved strongly-connected-component by component, and omega-regular
acceptance is decided on bottom components.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import networkx as nx
import numpy as np

from .distributions import Distribution, UnsupportedDistribution
from .dra import Dra, dra_step, label_mask
from .product import ProductSystem
from .pts import Pts, PtsState, apply_update, enabled_transition


class ChainError(ValueError):
    pass


DEFAULT_STATE_CAP = 200_000
EXACT_SCC_LIMIT = 250


@dataclass
class FiniteChain:
    """States are arbitrary hashables; ``succ[i]`` lists ``(j, p)`` pairs."""

    states: list
    succ: list
    init: dict  # index -> probability
    index: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.states)

    def row_sums(self) -> list[Fraction]:
        return [sum((p for _, p in row), Fraction(0)) for row in self.succ]

    def export_triplets(self) -> str:
        lines = [f"{i} {j} {p}" for i, row in enumerate(self.succ) for j, p in row]
        return "\n".join(lines) + "\n"


# -- building -------------------------------------------------------------


def _check_domain(pts: Pts, vals: tuple, domains: Mapping | None, where: str):
    if domains is None:
        return
    for v, x in zip(pts.variables, vals):
        if v not in domains:
            continue
        dom = domains[v]
        if isinstance(dom, tuple) and len(dom) == 2 and not isinstance(dom[0], (tuple, list)):
            ok = dom[0] <= x <= dom[1]
        else:
            ok = x in dom
        if not ok:
            raise ChainError(f"domain escape: {v}={x} outside {dom} ({where})")


def initial_distribution(pts: Pts) -> dict[tuple, Fraction]:
    """Exact initial valuations with their probabilities."""
    choices = []
    for v, d in pts.init_spec.dists:
        if isinstance(d, Distribution):
            choices.append(d.outcomes())
        else:
            choices.append([(Fraction(d), Fraction(1))])
    out: dict = {}
    for combo in itertools.product(*choices):
        vals = tuple(x for x, _ in combo)
        p = Fraction(1)
        for _, pi in combo:
            p *= pi
        out[vals] = out.get(vals, Fraction(0)) + p
    return out


def pts_successors(pts: Pts, s: PtsState) -> list[tuple[PtsState, Fraction]]:
    """Exact one-step distribution of a PTS state (discrete samples only)."""
    if s.loc == pts.out:
        return [(s, Fraction(1))]
    t = enabled_transition(pts, s)
    env = s.env(pts.variables)
    dists = pts.sample_dists
    out: dict = {}
    for f in t.forks:
        needed = sorted(set().union(*(p.variables() for _, p in f.update)) - set(pts.variables))
        outcome_lists = [dists[r].outcomes() for r in needed]
        for combo in itertools.product(*outcome_lists):
            e = dict(env)
            p = Fraction(f.prob)
            for r, (val, pr) in zip(needed, combo):
                e[r] = val
                p *= pr
            s2 = PtsState(f.dest, apply_update(f.update, e))
            out[s2] = out.get(s2, Fraction(0)) + p
    return list(out.items())


def _explore(init: dict, successors: Callable, cap: int) -> FiniteChain:
    states: list = []
    index: dict = {}

    def intern(x):
        i = index.get(x)
        if i is None:
            if len(states) >= cap:
                raise ChainError(f"state-count cap {cap} exceeded")
            i = index[x] = len(states)
            states.append(x)
        return i

    init_idx = {}
    for x, p in init.items():
        i = intern(x)
        init_idx[i] = init_idx.get(i, Fraction(0)) + p
    succ: list = []
    k = 0
    while k < len(states):
        row: dict = {}
        for y, p in successors(states[k]):
            j = intern(y)
            row[j] = row.get(j, Fraction(0)) + p
        succ.append(sorted(row.items()))
        k += 1
    return FiniteChain(states, succ, init_idx, index)


def _checked_successors(pts: Pts, domains):
    def succ(s: PtsState):
        out = pts_successors(pts, s)
        for s2, _ in out:
            _check_domain(pts, s2.vals, domains, f"transition out of {s.loc} at {s.env(pts.variables)}")
        return out
    return succ


def _require_discrete(pts: Pts):
    for name, d in list(pts.sample_vars) + [(v, d) for v, d in pts.init_spec.dists]:
        if isinstance(d, Distribution) and not d.discrete:
            raise UnsupportedDistribution(f"continuous distribution not enumerable: {name} ~ {d}")


def build_pts_chain(pts: Pts, domains: Mapping | None = None, cap: int = DEFAULT_STATE_CAP) -> FiniteChain:
    _require_discrete(pts)
    init = {PtsState(pts.init, vals): p for vals, p in initial_distribution(pts).items()}
    for s in init:
        _check_domain(pts, s.vals, domains, "initial valuation")
    return _explore(init, _checked_successors(pts, domains), cap)


def build_automaton_chain(pts: Pts, dra: Dra, domains: Mapping | None = None,
                          cap: int = DEFAULT_STATE_CAP) -> FiniteChain:
    """Chain over (PTS state, automaton state), without a counter."""
    _require_discrete(pts)
    step = _checked_successors(pts, domains)

    def succ(x):
        s, q = x
        q2 = dra_step(dra, q, label_mask(dra, s.env(pts.variables)))
        return [((s2, q2), p) for s2, p in step(s)]

    init = {(PtsState(pts.init, vals), dra.initial): p for vals, p in initial_distribution(pts).items()}
    for s, _ in init:
        _check_domain(pts, s.vals, domains, "initial valuation")
    return _explore(init, succ, cap)


def build_finite_chain(psys: ProductSystem, domains: Mapping | None = None,
                       cap: int = DEFAULT_STATE_CAP, counter_cap: int | None = None) -> FiniteChain:
    """Explicit product chain over (PTS state, automaton state, counter).

    ``counter_cap`` overrides the saturation point k+1 (used to compare
    saturated and unsaturated counters).
    """
    pts, dra = psys.pts, psys.dra
    _require_discrete(pts)
    step = _checked_successors(pts, domains)
    top = psys.cap if counter_cap is None else counter_cap

    def next_l(q2, l):
        if psys.mode == "FOV":
            return min(l + 1, top) if q2 in psys.U else l
        return 0 if q2 in psys.U else min(l + 1, top)

    def succ(x):
        s, q, l = x
        q2 = dra_step(dra, q, label_mask(dra, s.env(pts.variables)))
        l2 = next_l(q2, l)
        return [((s2, q2, l2), p) for s2, p in step(s)]

    init = {(PtsState(pts.init, vals), dra.initial, 0): p for vals, p in initial_distribution(pts).items()}
    for s, _, _ in init:
        _check_domain(pts, s.vals, domains, "initial valuation")
    return _explore(init, succ, cap)


# -- solving --------------------------------------------------------------


def _solve_block(block: list[int], A: list, b: dict, x: dict, exact: bool):
    """Solve x_B = A_BB x_B + (A_B,rest x_rest + b_B) for one component."""
    pos = {s: i for i, s in enumerate(block)}
    n = len(block)
    rhs = []
    for s in block:
        r = b.get(s, Fraction(0))
        for j, p in A[s]:
            if j not in pos:
                r += p * x.get(j, Fraction(0))
        rhs.append(r)
    if n == 1 and not any(j == block[0] for j, _ in A[block[0]]):
        x[block[0]] = rhs[0]
        return
    if exact and n <= EXACT_SCC_LIMIT:
        M = [[Fraction(0)] * n for _ in range(n)]
        for i, s in enumerate(block):
            M[i][i] += 1
            for j, p in A[s]:
                if j in pos:
                    M[i][pos[j]] -= p
        sol = _gauss(M, rhs)
        for s, v in zip(block, sol):
            x[s] = v
        return
    M = np.eye(n)
    for i, s in enumerate(block):
        for j, p in A[s]:
            if j in pos:
                M[i, pos[j]] -= float(p)
    sol = np.linalg.solve(M, np.array([float(r) for r in rhs]))
    for s, v in zip(block, sol):
        x[s] = Fraction(float(v))


def _gauss(M: list, rhs: list) -> list:
    n = len(M)
    M = [row[:] + [r] for row, r in zip(M, rhs)]
    for c in range(n):
        piv = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[piv] = M[piv], M[c]
        inv = 1 / M[c][c]
        M[c] = [v * inv for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * bb for a, bb in zip(M[r], M[c])]
    return [M[i][n] for i in range(n)]


def least_fixed_point(n: int, A: list, b: dict, exact: bool = True) -> list[Fraction]:
    """Least non-negative solution of ``x = A x + b`` for substochastic ``A``.

    States that cannot reach positive ``b`` get 0; the rest are solved in
    reverse topological order of strongly connected components.
    """
    pred: dict = {i: [] for i in range(n)}
    for i in range(n):
        for j, p in A[i]:
            if p:
                pred[j].append(i)
    live = set(i for i, v in b.items() if v)
    stack = list(live)
    while stack:
        j = stack.pop()
        for i in pred[j]:
            if i not in live:
                live.add(i)
                stack.append(i)
    g = nx.DiGraph()
    g.add_nodes_from(live)
    for i in live:
        for j, p in A[i]:
            if j in live and p:
                g.add_edge(i, j)
    cond = nx.condensation(g)
    x: dict = {}
    for c in reversed(list(nx.topological_sort(cond))):
        block = sorted(cond.nodes[c]["members"])
        _solve_block(block, A, b, x, exact)
    return [x.get(i, Fraction(0)) for i in range(n)]


def reach_probability(chain: FiniteChain, target: Callable[[object], bool] | Iterable[int],
                      exact: bool = True) -> Fraction:
    """Probability of eventually visiting the target set from the initial distribution."""
    n = len(chain)
    if callable(target):
        tgt = {i for i, s in enumerate(chain.states) if target(s)}
    else:
        tgt = set(target)
    A = [[] if i in tgt else [(j, p) for j, p in chain.succ[i] if j not in tgt] for i in range(n)]
    b = {i: sum((p for j, p in chain.succ[i] if j in tgt), Fraction(0)) for i in range(n) if i not in tgt}
    for i in tgt:
        b[i] = Fraction(1)
    x = least_fixed_point(n, A, b, exact)
    return sum((p * x[i] for i, p in chain.init.items()), Fraction(0))


def bottom_components(chain: FiniteChain) -> list[list[int]]:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(chain)))
    for i, row in enumerate(chain.succ):
        for j, p in row:
            if p:
                g.add_edge(i, j)
    cond = nx.condensation(g)
    return [sorted(cond.nodes[c]["members"]) for c in cond.nodes if cond.out_degree(c) == 0]


def acceptance_probability(chain: FiniteChain, dra: Dra, exact: bool = True) -> Fraction:
    """Probability that the automaton run is Rabin-accepting (chain over (s, q))."""
    good = set()
    for comp in bottom_components(chain):
        qs = {chain.states[i][1] for i in comp}
        if any(not (qs & p.E) and (qs & p.F) for p in dra.pairs):
            good.update(comp)
    return reach_probability(chain, good, exact)


def counter_event_probability(chain: FiniteChain, k: int) -> Fraction:
    """P[counter never reaches k+1] on a product chain (the k-times event)."""
    return 1 - reach_probability(chain, lambda x: x[2] >= k + 1)


def exact_probability(chain: FiniteChain, event) -> Fraction:
    """Dispatch on event: ``("reach", pred)``, ``("counter", k)``, ``("accept", dra)``, ``"all"``."""
    if event == "all":
        return sum(chain.init.values(), Fraction(0))
    kind, arg = event
    if kind == "reach":
        return reach_probability(chain, arg)
    if kind == "counter":
        return counter_event_probability(chain, arg)
    if kind == "accept":
        return acceptance_probability(chain, arg)
    raise ChainError(f"unsupported event {event!r}")


# -- counter semantics without saturation ---------------------------------


def visit_count_probability(chain: FiniteChain, U: frozenset, mode: str, k: int) -> Fraction:
    """P[k-times event] computed on the counter-free (s, q) chain.

    FOV: U is entered at most k times.  IOV: no more than k consecutive
    steps outside U.  Each layer ``j`` is a separate linear system, so no
    saturated counter is ever built.
    """
    n = len(chain)
    inU = [chain.states[i][1] in U for i in range(n)]
    if mode == "FOV":
        # g_j(i) = P[more than j future entries into U]; g_{-1} = 1.
        prev = [Fraction(1)] * n
        for _ in range(k + 1):
            A = [[(j, p) for j, p in chain.succ[i] if not inU[j]] for i in range(n)]
            b = {i: sum((p * prev[j] for j, p in chain.succ[i] if inU[j]), Fraction(0)) for i in range(n)}
            prev = least_fixed_point(n, A, b)
        bad = prev
    else:
        # h_m(i) = P[a run of k+1 misses occurs] given m current misses.
        layers = k + 1
        size = n * layers
        A: list = [[] for _ in range(size)]
        b: dict = {}
        for m in range(layers):
            for i in range(n):
                row_b = Fraction(0)
                for j, p in chain.succ[i]:
                    if inU[j]:
                        A[m * n + i].append((j, p))
                    elif m + 1 <= k:
                        A[m * n + i].append(((m + 1) * n + j, p))
                    else:
                        row_b += p
                b[m * n + i] = row_b
        sol = least_fixed_point(size, A, b)
        bad = sol[:n]
    return 1 - sum((p * bad[i] for i, p in chain.init.items()), Fraction(0))
