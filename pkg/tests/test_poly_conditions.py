from fractions import Fraction
from math import comb

import pytest
from hypothesis import given, settings, strategies as st

from omegacert import conditions as cnd
from omegacert.poly import AffineForm, Poly, format_poly, monomials_upto
from omegacert.ppl import parse_condition, parse_expression

VARS = ("x", "y", "z")

small = st.fractions(min_value=-5, max_value=5, max_denominator=6)


@st.composite
def polys(draw, max_terms=4, max_deg=3):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        exps = {v: draw(st.integers(0, max_deg)) for v in VARS}
        m = tuple(sorted((v, e) for v, e in exps.items() if e))
        terms[m] = terms.get(m, 0) + draw(small)
    return Poly(terms)


envs = st.fixed_dictionaries({v: small for v in VARS})


@given(polys(), polys(), envs)
def test_ring_operations_commute_with_evaluation(p, q, env):
    assert (p + q).evaluate(env) == p.evaluate(env) + q.evaluate(env)
    assert (p * q).evaluate(env) == p.evaluate(env) * q.evaluate(env)
    assert (p - q).evaluate(env) == p.evaluate(env) - q.evaluate(env)


@given(polys(), polys(), envs)
def test_substitution_is_composition(p, q, env):
    composed = p.substitute({"x": q})
    inner = dict(env, x=q.evaluate(env))
    assert composed.evaluate(env) == p.evaluate(inner)


@given(polys())
def test_format_parse_round_trip(p):
    assert parse_expression(format_poly(p)) == p


@given(polys(), envs)
def test_compiled_matches_exact(p, env):
    f = p.compile(list(VARS))
    assert f(*(float(env[v]) for v in VARS)) == pytest.approx(float(p.evaluate(env)), abs=1e-9)


@pytest.mark.parametrize("n,d", [(1, 0), (2, 1), (2, 3), (3, 2), (3, 4)])
def test_monomial_count(n, d):
    monos = monomials_upto(VARS[:n], d)
    assert len(monos) == comb(n + d, d)
    assert len(set(monos)) == len(monos)


def test_affine_coefficients():
    c = AffineForm.var("c0") * 2 + AffineForm.var("c1")
    p = Poly({(): c, (("x", 1),): AffineForm.var("c1")})
    q = p * Fraction(1, 2)
    assert q.terms[()].evaluate({"c0": 1, "c1": 4}) == 3
    assert q.is_parametric()


conds = st.sampled_from([
    "x >= 1", "x < 2", "y = 0", "x != y", "not (x <= y)", "x >= 0 and y > 1",
    "x = 1 or y < -1", "not (x = 0 or y >= 2)", "x*y >= 1 and not (z = 0)",
])


@given(st.lists(conds, min_size=1, max_size=3), envs)
@settings(max_examples=150)
def test_dnf_preserves_truth(parts, env):
    f = parse_condition(" and ".join(f"({p})" for p in parts[:2]) + (f" or ({parts[2]})" if len(parts) > 2 else ""))
    assert f.holds(env) == any(cnd.conj_holds(c, env) for c in cnd.dnf(f))
    assert (not f.holds(env)) == any(cnd.conj_holds(c, env) for c in cnd.dnf(f, positive=False))


def test_feasibility_strict_and_closed():
    gt = cnd.dnf(parse_condition("x > 0 and x < 0"))[0]
    ge = cnd.dnf(parse_condition("x >= 0 and x <= 0"))[0]
    assert not cnd.feasible(gt)
    assert cnd.feasible(ge)
    assert cnd.feasible(cnd.close(gt))
    assert not cnd.feasible(cnd.dnf(parse_condition("x >= 1 and x <= 0"))[0])


def test_negated_equality_splits():
    cells = cnd.dnf(parse_condition("x != 1"))
    assert len(cells) == 2
    assert all(c[0].op == cnd.GT for c in cells)
