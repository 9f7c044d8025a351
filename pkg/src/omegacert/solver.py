"""Quantifier elimination and LP solving for certificate synthesis.

An entailment ``P(x) ==> c(x) >= 0`` over closed premises is replaced by the
polynomial identity ``c = sum_i kappa_i * g_i`` with ``kappa >= 0``, where
the ``g_i`` are 1, the premise polynomials (Farkas) or their products up to
a relaxation degree (Handelman).  Matching coefficients monomial by
monomial gives linear equations in the template coefficients, ``gamma``
and the multipliers.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .certgen import (
    GAMMA, CertificateProblem, Entailment, encode, is_upper, unknown_name,
)
from .poly import AffineForm, Poly, format_poly, mono_str

REPLAY_TOLERANCE = 1e-9
DEFAULT_ALPHA_GRID = (Fraction(99, 100), Fraction(95, 100), Fraction(9, 10), Fraction(8, 10), Fraction(6, 10))

OPTIMAL, INFEASIBLE, UNBOUNDED, NUMERIC, REJECTED = "optimal", "infeasible", "unbounded", "numeric-failure", "replay-rejected"
UNSUPPORTED = "unsupported"


class EliminationError(ValueError):
    pass


@dataclass
class Elimination:
    """Identity ``conclusion == sum_i kappa_i * generators[i]`` to be enforced."""

    entailment: Entailment
    generators: list  # Poly, generators[0] is the constant 1


def _premise_generators(e: Entailment) -> list[Poly]:
    gens: list[Poly] = []
    for c in e.premise:
        for g in c.closed_generators():
            if g.is_constant():
                if g.constant_term() < 0:
                    # a closed contradiction: the entailment holds vacuously
                    return [Poly.const(-1)]
                continue
            if g not in gens:
                gens.append(g)
    return gens


def farkas_eliminate(e: Entailment) -> Elimination:
    """Affine Farkas lemma with a constant slack multiplier."""
    if e.conclusion.degree() > 1 or any(c.degree() > 1 for c in e.premise):
        raise EliminationError("Farkas elimination needs degree <= 1 premise and conclusion")
    return Elimination(e, [Poly.const(1)] + _premise_generators(e))


def _normalized(p: Poly) -> Poly:
    scale = max(abs(c) for c in p.terms.values())
    return p * (1 / scale) if scale != 1 else p


def handelman_eliminate(e: Entailment, degree: int) -> Elimination:
    """Products of premise polynomials up to ``degree`` as generators."""
    if any(c.degree() > 1 for c in e.premise):
        raise EliminationError("Handelman elimination needs linear (polytopic) premises")
    if degree < e.conclusion.degree():
        raise EliminationError(
            f"relaxation degree {degree} below conclusion degree {e.conclusion.degree()}"
        )
    base = _premise_generators(e)
    gens = [Poly.const(1)]
    seen = {gens[0]}
    for size in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(base)), size):
            p = Poly.const(1)
            for i in combo:
                p = p * base[i]
            if p.is_zero():
                continue
            p = _normalized(p)
            if p not in seen:
                seen.add(p)
                gens.append(p)
    return Elimination(e, gens)


def eliminate(e: Entailment, relaxation_degree: int | None = None) -> Elimination:
    """Farkas when everything is linear, Handelman otherwise."""
    if e.conclusion.degree() <= 1 and all(c.degree() <= 1 for c in e.premise) and not relaxation_degree:
        return farkas_eliminate(e)
    # an explicit D below the conclusion degree is an error, not silently raised
    D = relaxation_degree or max(1, e.conclusion.degree())
    return handelman_eliminate(e, D)


# -- LP ----------------------------------------------------------------------


@dataclass
class LinearProgram:
    """``min c.x`` subject to ``A_eq x = b_eq`` and variable bounds."""

    names: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    bounds: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (dict var -> coef, rhs)
    ub_rows: list = field(default_factory=list)  # sum <= rhs
    objective: dict = field(default_factory=dict)
    eliminations: list = field(default_factory=list)  # (Elimination, [kappa var index])

    def var(self, key, lo=None, hi=None) -> int:
        i = self.index.get(key)
        if i is None:
            i = self.index[key] = len(self.names)
            self.names.append(key)
            self.bounds.append((lo, hi))
        return i

    def add_elimination(self, el: Elimination):
        kappas = [self.var(("kappa", len(self.eliminations), j), 0.0, None) for j in range(len(el.generators))]
        monos = set(el.entailment.conclusion.terms)
        for g in el.generators:
            monos.update(g.terms)
        for m in sorted(monos):
            row: dict = {}
            rhs = 0.0
            c = el.entailment.conclusion.terms.get(m)
            if isinstance(c, AffineForm):
                for u, v in c.terms.items():
                    j = self.var(u, *( (0.0, 1.0) if u == GAMMA else (None, None)))
                    row[j] = row.get(j, 0.0) + float(v)
                rhs = -float(c.const)
            elif c is not None:
                rhs = -float(c)
            for kv, g in zip(kappas, el.generators):
                gc = g.terms.get(m)
                if gc:
                    row[kv] = row.get(kv, 0.0) - float(gc)
            if row:
                self.rows.append((row, rhs))
            elif abs(rhs) > 0:
                self.rows.append(({}, rhs))  # 0 = rhs: infeasible
        self.eliminations.append((el, kappas))

    def n(self) -> int:
        return len(self.names)

    def to_lp_format(self) -> str:
        """CPLEX LP text; variable names are x<i> with a name map in comments."""
        def expr(coefs):
            parts = []
            for j, v in sorted(coefs.items()):
                if v == 0:
                    continue
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v)!r} x{j}")
            s = " ".join(parts) or "0 x0"
            return s[2:] if s.startswith("+ ") else s
        lines = [f"\\ x{i} = {_var_label(k)}" for i, k in enumerate(self.names)]
        lines.append("Minimize")
        lines.append(f" obj: {expr(self.objective)}")
        lines.append("Subject To")
        for r, (row, rhs) in enumerate(self.rows):
            lines.append(f" e{r}: {expr(row)} = {rhs!r}")
        for r, (row, rhs) in enumerate(self.ub_rows):
            lines.append(f" u{r}: {expr(row)} <= {rhs!r}")
        lines.append("Bounds")
        for i, (lo, hi) in enumerate(self.bounds):
            if lo is None and hi is None:
                lines.append(f" x{i} free")
            else:
                lo_s = "-inf" if lo is None else repr(lo)
                hi_s = "+inf" if hi is None else repr(hi)
                lines.append(f" {lo_s} <= x{i} <= {hi_s}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def _var_label(k) -> str:
    if isinstance(k, tuple) and k and k[0] == "kappa":
        return f"kappa[{k[1]},{k[2]}]"
    return unknown_name(k)


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    message: str = ""


def solve(lp: LinearProgram, tol: float = 1e-9, time_limit: float | None = None) -> LpResult:
    n = lp.n()
    if n == 0:
        return LpResult(OPTIMAL, np.zeros(0), 0.0)
    cost = np.zeros(n)
    for j, v in lp.objective.items():
        cost[j] = v

    def sparse(rows):
        r, c, v = [], [], []
        for i, (row, _) in enumerate(rows):
            for j, a in row.items():
                r.append(i)
                c.append(j)
                v.append(a)
        return coo_matrix((v, (r, c)), shape=(len(rows), n)).tocsr(), np.array([b for _, b in rows])

    kw = {}
    if lp.rows:
        kw["A_eq"], kw["b_eq"] = sparse(lp.rows)
    if lp.ub_rows:
        kw["A_ub"], kw["b_ub"] = sparse(lp.ub_rows)
    options = {"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}
    if time_limit:
        options["time_limit"] = time_limit
    res = linprog(cost, bounds=lp.bounds, method="highs-ds", options=options, **kw)
    if res.status == 0:
        return LpResult(OPTIMAL, res.x, float(res.fun), res.message)
    if res.status == 2:
        return LpResult(INFEASIBLE, message=res.message)
    if res.status == 3:
        return LpResult(UNBOUNDED, message=res.message)
    return LpResult(NUMERIC, message=res.message)


# -- certificates ----------------------------------------------------------


@dataclass
class Certificate:
    mode: str
    d: int
    k: int
    alpha: Fraction | None
    lam: Fraction | None
    gamma: Fraction
    bound: Fraction
    pieces: dict  # (loc, q, l) -> Poly with Fraction coefficients
    residual: float
    point_bound: Fraction | None = None

    def piece(self, loc, q, l) -> Poly:
        return self.pieces[loc, q, l]

    def to_json(self) -> str:
        return json.dumps({
            "mode": self.mode, "d": self.d, "k": self.k,
            "alpha": None if self.alpha is None else str(self.alpha),
            "lambda": None if self.lam is None else str(self.lam),
            "gamma": float(self.gamma), "gamma_exact": str(self.gamma), "bound": float(self.bound),
            "point_bound": None if self.point_bound is None else float(self.point_bound),
            "replay_residual": self.residual,
            "pieces": {f"{loc},{q},{l}": format_poly(p) for (loc, q, l), p in sorted(self.pieces.items())},
        }, indent=1)


@dataclass
class SolveOutcome:
    status: str
    certificate: Certificate | None = None
    lp: LinearProgram | None = None
    message: str = ""


def build_lp(problem: CertificateProblem, relaxation_degree: int | None = None,
             entailments: list[Entailment] | None = None) -> LinearProgram:
    ents = encode(problem) if entailments is None else entailments
    lp = LinearProgram()
    for u in problem.templates.unknowns():
        lp.var(u)
    g = lp.var(GAMMA, 0.0, 1.0)
    for e in ents:
        D = relaxation_degree
        if D is None and problem.d > 1:
            D = max(problem.d, e.conclusion.degree())
        lp.add_elimination(eliminate(e, D))
    lp.objective = {g: -1.0} if is_upper(problem.mode) else {g: 1.0}
    if is_upper(problem.mode) and problem.lam < 1:
        lp.ub_rows.append(({g: -1.0}, -float(problem.lam)))
    return lp


def replay(lp: LinearProgram, values: dict, kappas: list) -> float:
    """Largest per-monomial mismatch of the elimination identities, in rationals."""
    worst = 0.0
    for (el, kidx) in lp.eliminations:
        concl = el.entailment.conclusion
        diff: dict = {}
        for m, c in concl.terms.items():
            diff[m] = c.evaluate(values) if isinstance(c, AffineForm) else Fraction(c)
        for kv, g in zip(kidx, el.generators):
            kap = kappas[kv]
            if not kap:
                continue
            for m, gc in g.terms.items():
                diff[m] = diff.get(m, Fraction(0)) - kap * gc
        if diff:
            worst = max(worst, max(abs(float(v)) for v in diff.values()))
    return worst


def extract_certificate(res: LpResult, problem: CertificateProblem, lp: LinearProgram,
                        tolerance: float = REPLAY_TOLERANCE) -> SolveOutcome:
    """Concrete pieces and bound, accepted only if the exact replay matches."""
    if res.status != OPTIMAL:
        return SolveOutcome(res.status, None, lp, res.message)
    exact = [Fraction(float(v)) for v in res.x]
    values = {k: exact[i] for i, k in enumerate(lp.names) if not (isinstance(k, tuple) and k[0] == "kappa")}
    kappas = [max(v, Fraction(0)) if isinstance(k, tuple) and k[0] == "kappa" else v
              for k, v in zip(lp.names, exact)]
    gamma = min(max(values.get(GAMMA, Fraction(0)), Fraction(0)), Fraction(1))
    values[GAMMA] = gamma
    residual = replay(lp, values, kappas)
    fam = problem.templates
    pieces = {key: t.instantiate(values) for key, t in fam.pieces.items()}
    pts = problem.psys.pts
    point = pts.init_spec.point()
    point_bound = None
    if point is not None:
        v0 = pieces[pts.init, problem.psys.dra.initial, 0].evaluate(point)
        point_bound = min(max(1 - v0, Fraction(0)), Fraction(1))
    cert = Certificate(
        problem.mode, problem.d, problem.k,
        problem.alpha if is_upper(problem.mode) else None,
        problem.lam if is_upper(problem.mode) else None,
        gamma, 1 - gamma, pieces, residual, point_bound,
    )
    if residual > tolerance or math.isnan(residual):
        return SolveOutcome(REJECTED, cert, lp, f"replay residual {residual:.3g} above {tolerance:g}")
    return SolveOutcome(OPTIMAL, cert, lp)


def synthesize(problem: CertificateProblem, relaxation_degree: int | None = None) -> SolveOutcome:
    try:
        lp = build_lp(problem, relaxation_degree)
    except EliminationError as e:
        return SolveOutcome(UNSUPPORTED, None, None, str(e))
    return extract_certificate(solve(lp), problem, lp)


def synthesize_best(psys, mode: str, d: int, alpha_grid=DEFAULT_ALPHA_GRID, lam=Fraction(1),
                    relaxation_degree: int | None = None) -> SolveOutcome:
    """Lower modes solve once; upper modes try each alpha and keep the best bound."""
    if not is_upper(mode):
        return synthesize(CertificateProblem(psys, mode, d), relaxation_degree)
    best: SolveOutcome | None = None
    templates = None
    for a in alpha_grid:
        prob = CertificateProblem(psys, mode, d, alpha=a, lam=lam, templates=templates)
        templates = prob.templates
        out = synthesize(prob, relaxation_degree)
        if out.status == OPTIMAL and (best is None or best.status != OPTIMAL
                                      or out.certificate.bound < best.certificate.bound):
            best = out
        elif best is None:
            best = out
    return best


def identity_rows(el: Elimination) -> list[tuple]:
    """Per monomial: (monomial, conclusion coefficient, [generator coefficients])."""
    monos = set(el.entailment.conclusion.terms)
    for g in el.generators:
        monos.update(g.terms)
    return [(m, el.entailment.conclusion.terms.get(m, 0), [g.terms.get(m, 0) for g in el.generators])
            for m in sorted(monos)]


@dataclass
class SystemSolution:
    status: str
    values: dict
    residual: float


def solve_entailment_system(ents: list[Entailment], relaxation_degree: int | None = None,
                            objective: dict | None = None, bounds: dict | None = None,
                            tolerance: float = REPLAY_TOLERANCE) -> SystemSolution:
    """Eliminate and solve a standalone list of entailments over free unknowns.

    ``objective`` maps unknowns to cost coefficients (minimized); ``bounds``
    maps unknowns to (lo, hi).  The exact replay decides acceptance.
    """
    lp = LinearProgram()
    for u, (lo, hi) in (bounds or {}).items():
        lp.var(u, lo, hi)
    for e in ents:
        lp.add_elimination(eliminate(e, relaxation_degree))
    lp.objective = {lp.var(u): float(c) for u, c in (objective or {}).items()}
    res = solve(lp)
    if res.status != OPTIMAL:
        return SystemSolution(res.status, {}, math.inf)
    exact = [Fraction(float(v)) for v in res.x]
    values = {k: exact[i] for i, k in enumerate(lp.names) if not (isinstance(k, tuple) and k[0] == "kappa")}
    kappas = [max(v, Fraction(0)) if isinstance(k, tuple) and k[0] == "kappa" else v
              for k, v in zip(lp.names, exact)]
    residual = replay(lp, values, kappas)
    return SystemSolution(OPTIMAL if residual <= tolerance else REJECTED, values, residual)


def describe_generators(el: Elimination) -> list[str]:
    return [format_poly(g) for g in el.generators]


def kappa_values(lp: LinearProgram, res: LpResult) -> dict:
    out = {}
    for i, k in enumerate(lp.names):
        if isinstance(k, tuple) and k[0] == "kappa":
            out[(k[1], k[2])] = float(res.x[i])
    return out


__all__ = [
    "Certificate", "Elimination", "EliminationError", "LinearProgram", "LpResult", "SolveOutcome",
    "build_lp", "eliminate", "extract_certificate", "farkas_eliminate", "handelman_eliminate",
    "SystemSolution", "identity_rows", "replay", "solve", "solve_entailment_system", "synthesize",
    "synthesize_best",
]
