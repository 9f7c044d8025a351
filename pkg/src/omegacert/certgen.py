"""Barrier-certificate templates and the entailments they must satisfy.

A certificate is a family of polynomials indexed by (location, automaton
state, counter value).  Each side condition of the four bound modes becomes
an entailment ``premise ==> conclusion >= 0`` whose conclusion is affine in
the unknown template coefficients and in ``gamma``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

from . import conditions as cnd
from .distributions import moment
from .poly import AffineForm, Poly, format_poly, mono_str, monomials_upto
from .product import FOV, IOV, ProductSystem, premise_cells, symbolic_product_edges

LOWER_FOV, UPPER_FOV, LOWER_IOV, UPPER_IOV = "lowerFOV", "upperFOV", "lowerIOV", "upperIOV"
MODES = (LOWER_FOV, UPPER_FOV, LOWER_IOV, UPPER_IOV)
GAMMA = "gamma"
DEFAULT_TEMPLATE_CAP = 200_000


class TemplateError(ValueError):
    pass


def mode_kind(mode: str) -> str:
    return FOV if mode.endswith("FOV") else IOV


def is_upper(mode: str) -> bool:
    return mode.startswith("upper")


@dataclass(frozen=True)
class TemplatePolynomial:
    index: tuple  # (location, q, l)
    monomials: tuple

    def unknown(self, m) -> tuple:
        return ("c",) + self.index + (m,)

    def poly(self) -> Poly:
        return Poly({m: AffineForm.var(self.unknown(m)) for m in self.monomials})

    def instantiate(self, values) -> Poly:
        return Poly({m: Fraction(values.get(self.unknown(m), 0)) for m in self.monomials})


@dataclass
class TemplateFamily:
    variables: tuple
    degree: int
    k: int
    pieces: dict = field(default_factory=dict)  # (loc, q, l) -> TemplatePolynomial

    def __getitem__(self, key) -> TemplatePolynomial:
        return self.pieces[key]

    def unknowns(self) -> list:
        return [t.unknown(m) for t in self.pieces.values() for m in t.monomials]


def make_templates(psys: ProductSystem, d: int, k: int | None = None,
                   cap: int = DEFAULT_TEMPLATE_CAP) -> TemplateFamily:
    """One polynomial of degree <= d per (location, state, counter in [0, k+1])."""
    k = psys.k if k is None else k
    if d < 0 or k < 0:
        raise TemplateError("degree and k must be non-negative")
    pts = psys.pts
    n = len(pts.variables)
    total = len(pts.locations) * psys.dra.n_states * (k + 2) * comb(n + d, d)
    if total > cap:
        raise TemplateError(f"template has {total} coefficients, above the cap {cap}")
    monos = tuple(monomials_upto(pts.variables, d))
    fam = TemplateFamily(tuple(pts.variables), d, k)
    for loc in pts.locations:
        for q in psys.dra.states:
            for l in range(k + 2):
                fam.pieces[loc, q, l] = TemplatePolynomial((loc, q, l), monos)
    return fam


# -- pre-expectation --------------------------------------------------------


class _MomentCache:
    """Expected image of each monomial under an update map."""

    def __init__(self, variables, sample_dists):
        self.variables = set(variables)
        self.dists = sample_dists
        self.cache: dict = {}

    def expect(self, poly: Poly) -> Poly:
        """Replace sample-variable monomials by products of moments."""
        acc: dict = {}
        for m, c in poly.terms.items():
            keep, factor = [], Fraction(1)
            for v, e in m:
                if v in self.variables:
                    keep.append((v, e))
                else:
                    if v not in self.dists:
                        raise TemplateError(f"no distribution for sample variable {v}")
                    factor *= moment(self.dists[v], e)
            if factor:
                key = tuple(keep)
                acc[key] = acc.get(key, 0) + c * factor
        return Poly(acc)

    def image(self, mono, update: tuple) -> Poly:
        key = (mono, update)
        hit = self.cache.get(key)
        if hit is None:
            mapping = dict(update)
            img = Poly.const(1)
            for v, e in mono:
                img = img * (mapping.get(v, Poly.var(v)) ** e)
            hit = self.cache[key] = self.expect(img)
        return hit


def expected_template(template: TemplatePolynomial, update: tuple, moments: _MomentCache) -> dict:
    """E_r[template(update(v, r))] as monomial -> AffineForm."""
    acc: dict = {}
    for m in template.monomials:
        u = template.unknown(m)
        for m2, c in moments.image(m, update).terms.items():
            form = acc.get(m2)
            if form is None:
                form = acc[m2] = AffineForm()
            form.terms[u] = form.terms.get(u, 0) + c
    return acc


def pre_expectation(fam: TemplateFamily, forks, psys: ProductSystem, moments: _MomentCache | None = None) -> Poly:
    """sum_j p_j * E_r[eta_(dest_j, q', l')(Up_j(v, r))] for ``forks`` = [(p, update, dest, q', l')]."""
    moments = moments or _MomentCache(psys.pts.variables, psys.pts.sample_dists)
    acc: dict = {}
    for prob, update, dest, q2, l2 in forks:
        for m2, form in expected_template(fam[dest, q2, l2], update, moments).items():
            scaled = form * Fraction(prob)
            acc[m2] = acc[m2] + scaled if m2 in acc else scaled
    return Poly(acc)


# -- entailments -------------------------------------------------------------


@dataclass(frozen=True)
class Entailment:
    tag: tuple  # (condition, location, q, l, ...) for stable ordering and diagnostics
    premise: tuple  # closed conjunction of Constraints
    conclusion: Poly  # affine coefficients; the entailment asserts conclusion >= 0

    def describe(self) -> str:
        return f"{'/'.join(map(str, self.tag))}: {cnd.conj_str(self.premise)} ==> {format_poly(self.conclusion)} >= 0"


@dataclass
class CertificateProblem:
    psys: ProductSystem
    mode: str
    d: int
    alpha: Fraction = Fraction(9, 10)
    lam: Fraction = Fraction(1)
    templates: TemplateFamily | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise TemplateError(f"unknown mode {self.mode!r}")
        if mode_kind(self.mode) != self.psys.mode:
            raise TemplateError(f"mode {self.mode} needs a {mode_kind(self.mode)} product")
        self.alpha = Fraction(self.alpha)
        self.lam = Fraction(self.lam)
        if is_upper(self.mode):
            if not 0 < self.alpha < 1:
                raise TemplateError("alpha must lie in (0, 1)")
            if not 0 <= self.lam <= 1:
                raise TemplateError("lambda must lie in [0, 1]")
        if self.templates is None:
            self.templates = make_templates(self.psys, self.d)

    @property
    def k(self) -> int:
        return self.psys.k


def _const_affine(c) -> AffineForm:
    return AffineForm({}, c)


def _poly_plus(p: Poly, c: AffineForm) -> Poly:
    terms = dict(p.terms)
    terms[()] = terms[()] + c if () in terms else c
    return Poly(terms)


def encode(problem: CertificateProblem) -> list[Entailment]:
    """All entailments for the problem's mode, in a stable order."""
    psys, fam = problem.psys, problem.templates
    pts, dra = psys.pts, psys.dra
    upper = is_upper(problem.mode)
    k = psys.k
    gamma = AffineForm.var(GAMMA)
    out: list[Entailment] = []

    def add(tag, premise, conclusion):
        if isinstance(premise, cnd.Formula):
            cells = premise_cells(premise)
        else:
            cells = [cnd.close(premise)] if cnd.feasible(premise) else []
        for cell in cells:
            out.append(Entailment(tag, cell, conclusion))

    # bounds on every piece
    for (loc, q, l), t in fam.pieces.items():
        inv = cnd.close(pts.invariant(loc))
        eta = t.poly()
        add(("nonneg", loc, q, l), inv, eta)
        if upper:
            add(("le_one", loc, q, l), inv, _poly_plus(-eta, _const_affine(1)))

    # initial condition
    init_premise = cnd.conj_and(pts.init_spec.support, pts.invariant(pts.init))
    eta0 = fam[pts.init, dra.initial, 0].poly()
    if upper:
        add(("init",), init_premise, _poly_plus(eta0, -gamma))
    else:
        add(("init",), init_premise, _poly_plus(-eta0, gamma))

    # threshold pieces
    for loc in pts.locations:
        inv = pts.invariant(loc)
        if not cnd.feasible(inv):
            continue
        for q in sorted(psys.threshold_states()):
            eta = fam[loc, q, k + 1].poly()
            if upper:
                if problem.lam < 1:
                    add(("threshold", loc, q, k + 1), inv, _poly_plus(-eta, _const_affine(problem.lam)))
            else:
                add(("threshold", loc, q, k + 1), inv, _poly_plus(eta, _const_affine(-1)))

    # drift, one entailment per (piece, transition, automaton edge, premise cell)
    moments = _MomentCache(pts.variables, pts.sample_dists)
    groups: dict = {}
    for e in symbolic_product_edges(psys):
        if e.l > k:
            continue
        key = (e.loc, e.q, e.l, e.transition, e.dra_edge)
        g = groups.setdefault(key, [e.premise, []])
        g[1].append((e.prob, e.update, e.dest, e.q2, e.l2))
    for (loc, q, l, ti, ei), (premise, forks) in groups.items():
        cells = premise_cells(premise)
        if not cells:
            continue
        pe = pre_expectation(fam, forks, psys, moments)
        eta = fam[loc, q, l].poly()
        concl = pe * problem.alpha - eta if upper else eta - pe
        for cell in cells:
            out.append(Entailment(("drift", loc, q, l, ti, ei), cell, concl))
    return out


def dump_entailments(ents: list[Entailment]) -> str:
    """JSON dump: premise atoms and conclusion coefficients per monomial."""
    def form(f):
        if isinstance(f, AffineForm):
            return {"const": str(f.const), "terms": {_unknown_name(k): str(v) for k, v in sorted(f.terms.items(), key=repr)}}
        return {"const": str(f), "terms": {}}

    doc = [
        {
            "tag": [str(t) for t in e.tag],
            "premise": [str(c) for c in e.premise],
            "conclusion": {mono_str(m) or "1": form(c) for m, c in sorted(e.conclusion.terms.items())},
        }
        for e in ents
    ]
    return json.dumps(doc, indent=1)


def _unknown_name(u) -> str:
    if u == GAMMA:
        return GAMMA
    if isinstance(u, tuple) and u and u[0] == "c":
        _, loc, q, l, m = u
        return f"c[{loc},{q},{l},{mono_str(m) or '1'}]"
    return str(u)


unknown_name = _unknown_name
