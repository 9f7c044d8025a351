"""Acceptance criteria; each test records one PASS/FAIL line for the terminal summary."""

import time
from fractions import Fraction

import numpy as np
import pytest

from omegacert import conditions as cnd
from omegacert.certgen import LOWER_FOV, LOWER_IOV, UPPER_FOV, UPPER_IOV, Entailment, is_upper, mode_kind
from omegacert.chain import (
    acceptance_probability, build_automaton_chain, build_finite_chain, counter_event_probability,
    visit_count_probability,
)
from omegacert.martingale import MartingaleConfig, corrupt, martingale_check
from omegacert.poly import AffineForm, Poly
from omegacert.product import FOV, IOV, ProductSystem
from omegacert.simulate import ACCEPT, COUNTER, SimConfig, accept_system, simulate_event
from omegacert.solver import INFEASIBLE, OPTIMAL, REJECTED, solve_entailment_system, synthesize_best
from omegacert.verify import BoundInterval, VerificationTask, compute_tpd, verify_property

from conftest import ACCEPTANCE_LINES, load_dra, load_pts


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# -- 1: posterior ratio table ----------------------------------------------------

# (name, numerator interval, denominator interval, expected posterior)
TPD_ROWS = [
    ("ex3 F", (0.17385, 0.37294), (0.50000, 0.75356), (0.23071, 0.74588)),
    ("ex3 GF", (0.18394, 0.36288), (0.66670, 0.87391), (0.21048, 0.54429)),
    ("ex4 G&F", (0.29054, 0.53084), (0.61804, 0.85172), (0.34113, 0.85891)),
    ("ex4 GF", (0.30193, 0.49660), (0.61903, 0.89802), (0.33622, 0.80222)),
    ("1d-asym-rw G|F", (0.09477, 0.24967), (0.01962, 0.10990), (0.86227, 1.0)),
    ("1d-asym-rw GF|GF", (0.05140, 0.13178), (0.18586, 0.31765), (0.16181, 0.70903)),
    ("RE1", (0.09462, 0.19100), (0.27042, 0.36236), (0.26112, 0.70632)),
    ("RE2", (0.86578, 0.94964), (0.93582, 0.97739), (0.88581, 1.0)),
]


def test_criterion_1_posterior_table():
    t0 = time.perf_counter()
    worst = 0.0
    bad = []
    for name, num, den, (lo, hi) in TPD_ROWS:
        out = compute_tpd(BoundInterval(*num), BoundInterval(*den))
        err = max(abs(out.lower - lo), abs(out.upper - hi))
        worst = max(worst, err)
        if err > 1e-4:
            bad.append(f"{name}: got [{out.lower:.5f}, {out.upper:.5f}]")
    secs = time.perf_counter() - t0
    ok = not bad and secs < 1
    record(1, ok, f"8 rows, max abs error {worst:.2e} (tol 1e-4), {secs:.3f}s {'; '.join(bad)}")
    assert ok


# -- 2: certificate bounds against the exact finite-chain oracle ---------------------

SANDWICH_SLACK = 1e-7  # replay admits 1e-9 per monomial; bounds are compared with this margin


def test_criterion_2_oracle_sandwich():
    t0 = time.perf_counter()
    pts = load_pts("re2_bounded.pp")
    closed = {}
    for name, c in (("re2_c2.dra", 2), ("re2_c3.dra", 3)):
        dra = load_dra(name)
        closed[name] = acceptance_probability(build_automaton_chain(pts, dra), dra)
        assert closed[name] == 1 - Fraction(1, 2 ** (c + 1))
    sim_ok = abs(float(closed["re2_c2.dra"]) - 0.8749) <= 1e-3 and abs(float(closed["re2_c3.dra"]) - 0.9375) <= 1e-3

    checked = skipped = 0
    failures = []
    exact_cache = {}
    for name in ("re2_c2.dra", "re2_c3.dra", "re2_c2_two_pairs.dra"):
        dra = load_dra(name)
        for pair in dra.pairs:
            sides = [(pair.F, LOWER_IOV), (pair.F, UPPER_IOV)]
            if pair.E:
                sides += [(pair.E, LOWER_FOV), (pair.E, UPPER_FOV)]
            for U, mode in sides:
                for k in range(4):
                    key = (name, U, mode_kind(mode), k)
                    psys = ProductSystem(pts, dra, U, mode_kind(mode), k)
                    if key not in exact_cache:
                        exact_cache[key] = counter_event_probability(build_finite_chain(psys), k)
                    exact = float(exact_cache[key])
                    for d in (1, 2, 3):
                        out = synthesize_best(psys, mode, d)
                        if out.status != OPTIMAL:
                            skipped += 1
                            continue
                        checked += 1
                        b = float(out.certificate.bound)
                        sound = b >= exact - SANDWICH_SLACK if is_upper(mode) else b <= exact + SANDWICH_SLACK
                        if not sound:
                            failures.append(f"{name} {mode} U={sorted(U)} d={d} k={k}: bound {b:.6f} exact {exact:.6f}")
    secs = time.perf_counter() - t0
    ok = sim_ok and not failures and checked > 0 and secs < 300
    record(2, ok, f"{checked} certificates sandwich the exact value, {skipped} solves without certificate, "
                  f"closed forms 7/8 and 15/16 match 0.8749/0.9375, {secs:.1f}s {'; '.join(failures[:3])}")
    assert ok


# -- 3: elimination soundness fuzz ---------------------------------------------------


def _random_polytope(rng, n):
    names = [f"v{i}" for i in range(n)]
    hi = [int(rng.integers(1, 5)) for _ in range(n)]
    gens = []
    for v, h in zip(names, hi):
        gens.append(Poly.var(v))
        gens.append(h - Poly.var(v))
    center = {v: Fraction(h, 2) for v, h in zip(names, hi)}
    for _ in range(int(rng.integers(0, 3))):
        a = [Fraction(int(rng.integers(-3, 4))) for _ in names]
        lin = sum((c * Poly.var(v) for c, v in zip(a, names)), Poly.zero())
        if lin.is_zero():
            continue
        slack = Fraction(int(rng.integers(1, 4)), 2)
        gens.append(lin.evaluate(center) + slack - lin)  # keeps the box center strictly inside
    return names, hi, gens


def _points(rng, names, hi, gens, count):
    """Uniform samples from the polytope by rejection from its bounding box."""
    fns = [g.compile(names) for g in gens]
    out = []
    while sum(len(p) for p in out) < count:
        cand = rng.uniform(0, 1, size=(4 * count, len(names))) * np.array(hi, dtype=float)
        keep = np.all([np.asarray(f(*cand.T)) >= 0 for f in fns], axis=0)
        out.append(cand[keep])
    return np.concatenate(out)[:count]


def _true_polynomial(rng, gens, degree):
    p = Poly.const(Fraction(int(rng.integers(0, 4)), 4))
    for _ in range(int(rng.integers(1, 5))):
        term = Poly.const(Fraction(int(rng.integers(1, 9)), 4))
        for _ in range(int(rng.integers(1, degree + 1))):
            term = term * gens[int(rng.integers(len(gens)))]
        p = p + term
    return p


def _with_unknowns(p, var):
    """p - t - w*var with free t and w >= 0 pushed up by the objective."""
    terms = {m: AffineForm({}, c) for m, c in p.terms.items()}
    terms[()] = terms.get((), AffineForm()) + AffineForm({"t": -1})
    m = ((var, 1),)
    terms[m] = terms.get(m, AffineForm()) + AffineForm({"w": -1})
    return Poly(terms)


def test_criterion_3_elimination_fuzz():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    feasible_ok = 0
    worst = float("inf")
    problems = []
    for i in range(100):
        n = int(rng.integers(1, 4))
        degree = 1 if i % 2 == 0 else int(rng.integers(2, 4))
        names, hi, gens = _random_polytope(rng, n)
        premise = tuple(cnd.Constraint.make(g, cnd.GE) for g in gens)
        p = _true_polynomial(rng, gens, degree)
        e = Entailment(("fuzz", i), premise, _with_unknowns(p, names[0]))
        sol = solve_entailment_system([e], relaxation_degree=None if degree == 1 else degree,
                                      objective={"t": -1, "w": -1}, bounds={"t": (-100, 100), "w": (0, 10)})
        if sol.status != OPTIMAL:
            problems.append(f"feasible #{i} -> {sol.status}")
            continue
        concrete = p - sol.values["t"] - sol.values["w"] * Poly.var(names[0])
        pts = _points(rng, names, hi, gens, 10_000)
        vals = np.asarray(concrete.compile(names)(*pts.T), dtype=float)
        low = float(vals.min())
        worst = min(worst, low)
        if low < -1e-7:
            problems.append(f"feasible #{i}: residual {low:.3g}")
        else:
            feasible_ok += 1

    false_caught = 0
    for i in range(100):
        n = int(rng.integers(1, 4))
        degree = 1 if i % 2 == 0 else int(rng.integers(2, 4))
        names, hi, gens = _random_polytope(rng, n)
        premise = tuple(cnd.Constraint.make(g, cnd.GE) for g in gens)
        p = _true_polynomial(rng, gens, degree)
        witness = _points(rng, names, hi, gens, 1)[0]
        env = {v: Fraction(float(x)) for v, x in zip(names, witness)}
        delta = Fraction(int(rng.integers(1, 100)), 100)
        false = p - p.evaluate(env) - delta  # negative at the witness point
        sol = solve_entailment_system([Entailment(("false", i), premise, false)],
                                      relaxation_degree=None if degree == 1 else degree)
        if sol.status in (INFEASIBLE, REJECTED):
            false_caught += 1
        else:
            problems.append(f"false #{i} -> {sol.status}")
    secs = time.perf_counter() - t0
    ok = feasible_ok == 100 and false_caught == 100 and secs < 120
    record(3, ok, f"{feasible_ok}/100 feasible sound at 10^4 points (min residual {worst:.2e}), "
                  f"{false_caught}/100 false entailments rejected, {secs:.1f}s {'; '.join(problems[:3])}")
    assert ok


# -- 4: drift conditions at sampled states ----------------------------------------


MARTINGALE_CASES = [
    ("re2.pp", "re2_c2.dra", 2, 2),
    ("re2.pp", "re2_c3.dra", 3, 3),
    ("re1.pp", "re1_gf.dra", 2, 1),
]


def test_criterion_4_martingale_check():
    cfg = MartingaleConfig(states=1000, seed=11)
    certs = 0
    worst = 0.0
    slowest = 0.0
    failures = []
    for prog, name, d, k in MARTINGALE_CASES:
        pts, dra = load_pts(prog), load_dra(name)
        (pair,) = dra.pairs
        for mode in (LOWER_FOV, UPPER_FOV, LOWER_IOV, UPPER_IOV):
            U = pair.E if mode_kind(mode) == FOV else pair.F
            psys = ProductSystem(pts, dra, U, mode_kind(mode), k)
            out = synthesize_best(psys, mode, d)
            if out.status != OPTIMAL:
                continue
            t0 = time.perf_counter()
            rep = martingale_check(out.certificate, psys, cfg)
            key = (pts.init, dra.initial, 0)
            delta = Fraction(-1, 10) if is_upper(mode) else Fraction(1, 10)
            bad = martingale_check(corrupt(out.certificate, key, (), delta), psys, cfg)
            slowest = max(slowest, time.perf_counter() - t0)
            certs += 1
            worst = max(worst, rep.max_violation)
            if not rep.ok(1e-6) or rep.states_checked < 1000:
                failures.append(f"{prog} {name} {mode}: violation {rep.max_violation:.2e}")
            if bad.ok(1e-6):
                failures.append(f"{prog} {name} {mode}: corrupted copy not flagged")
    ok = certs >= 8 and not failures and slowest < 60
    record(4, ok, f"{certs} certificates, max violation {worst:.2e} (tol 1e-6), corrupted copies flagged, "
                  f"slowest {slowest:.2f}s {'; '.join(failures[:3])}")
    assert ok


# -- 5: saturated counter versus direct visit counting ---------------------------


COUNTER_INSTANCES = [
    ("re2_bounded.pp", "re2_c2.dra", {1}),
    ("re2_bounded.pp", "re2_c3.dra", {2}),
    ("re1_bounded.pp", "fig1b.dra", {3}),
]


def test_criterion_5_counter_semantics():
    t0 = time.perf_counter()
    compared = 0
    mismatches = []
    for prog, name, U in COUNTER_INSTANCES:
        pts, dra = load_pts(prog), load_dra(name)
        plain = build_automaton_chain(pts, dra)
        for mode in (FOV, IOV):
            for k in range(4):
                a = counter_event_probability(build_finite_chain(ProductSystem(pts, dra, U, mode, k)), k)
                b = visit_count_probability(plain, frozenset(U), mode, k)
                compared += 1
                if not (isinstance(a, Fraction) and a == b):
                    mismatches.append(f"{prog} {name} {mode} k={k}: {a} vs {b}")
    secs = time.perf_counter() - t0
    ok = not mismatches and secs < 30
    record(5, ok, f"{compared} exact rational comparisons on 3 instances, {secs:.1f}s {'; '.join(mismatches[:3])}")
    assert ok


# -- 6: simulation against exact values -------------------------------------------

SIM_BENCHMARKS = [
    ("re2_bounded.pp", "re2_c2.dra"),
    ("re2_bounded.pp", "re2_c3.dra"),
    ("re2_bounded.pp", "re2_c2_two_pairs.dra"),
    ("re1_bounded.pp", "fig1b.dra"),
    ("re1_bounded.pp", "re1_f.dra"),
    ("re1_bounded.pp", "re1_gf.dra"),
]


def test_criterion_6_simulation():
    t0 = time.perf_counter()
    n = 100_000
    compared = 0
    worst = 0.0
    misses = []

    def check(label, est, exact):
        nonlocal compared, worst
        compared += 1
        z = abs(est.value - float(exact)) / max(est.stderr, 1e-12) if est.value != float(exact) else 0.0
        worst = max(worst, z)
        if z > 3:
            misses.append(f"{label}: {est.value:.4f} vs {float(exact):.4f} ({z:.1f} se)")

    for prog, name in SIM_BENCHMARKS:
        pts, dra = load_pts(prog), load_dra(name)
        exact = acceptance_probability(build_automaton_chain(pts, dra), dra)
        check(f"{prog} {name} accept", simulate_event(accept_system(pts, dra), SimConfig(n, seed=1)), exact)
        for pair in dra.pairs:
            for U, mode in ((pair.E, FOV), (pair.F, IOV)):
                if not U:
                    continue
                psys = ProductSystem(pts, dra, U, mode, 2)
                exact = counter_event_probability(build_finite_chain(psys), 2)
                est = simulate_event(psys, SimConfig(n, seed=2, event=COUNTER))
                check(f"{prog} {name} {mode} U={sorted(U)}", est, exact)

    re1 = simulate_event(accept_system(load_pts("re1.pp"), load_dra("re1_f.dra")), SimConfig(n, seed=3, event=ACCEPT))
    check("RE1 F(y>0) vs 0.3563", re1, 0.3563)
    re2 = simulate_event(accept_system(load_pts("re2.pp"), load_dra("re2_c3.dra")), SimConfig(n, seed=4, event=ACCEPT))
    check("RE2 (n<=3) U (x=1) vs 0.9375", re2, 0.9375)
    secs = time.perf_counter() - t0
    ok = not misses and secs < 120
    record(6, ok, f"{compared} estimates at 10^5 samples, max deviation {worst:.2f} se (tol 3), {secs:.1f}s "
                  f"{'; '.join(misses[:3])}")
    assert ok


# -- 7: informational comparison with published bounds ------------------------------

# (program, automaton, E.d., F.d., k, published interval)
PUBLISHED = [
    ("re2.pp", "re2_c2.dra", 3, 3, 2, (0.86578, 0.94964)),
    ("re2.pp", "re2_c3.dra", 3, 3, 3, (0.93582, 0.97739)),
    ("re1.pp", "re1_f.dra", 1, 3, 2, (0.27042, 0.36236)),
    ("re1.pp", "re1_gf.dra", 3, 3, 2, (0.09462, 0.19100)),
    ("re2.pp", "re2_c2.dra", 2, 2, 1, (0.6551, 0.9778)),
    ("re2.pp", "re2_c2.dra", 3, 3, 1, (0.8713, 0.9675)),
    ("re2.pp", "re2_c2.dra", 3, 3, 3, (0.8721, 0.8901)),
]


def test_criterion_7_published_bounds_informational():
    rows = []
    for prog, name, de, df, k, (plo, phi) in PUBLISHED:
        t0 = time.perf_counter()
        rep = verify_property(VerificationTask(load_pts(prog), load_dra(name), k=k, degree_fin=de, degree_inf=df))
        iv = rep.interval
        assert 0 <= iv.lower <= 1 and 0 <= iv.upper <= 1
        rows.append(f"{prog}/{name} d=({de},{df}) k={k}: [{iv.lower:.5f}, {iv.upper:.5f}] vs published "
                    f"[{plo:.5f}, {phi:.5f}] ({iv.status}, {time.perf_counter() - t0:.1f}s)")
    record(7, True, "informational only:\n    " + "\n    ".join(rows))
