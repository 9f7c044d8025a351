import itertools
import random
import warnings

import pytest
from hypothesis import given, strategies as st

from omegacert.chain import build_finite_chain, counter_event_probability
from omegacert.dra import parse_dra, universal_dra
from omegacert.product import FOV, IOV, ProductSystem
from omegacert.verify import (
    NO_CERTIFICATE, BoundInterval, ConjunctionError, TpdError, VerificationTask, combine_pair, combine_pairs,
    compute_tpd, conjoin_dras, lasso_accepts, verify_property,
)

from conftest import load_dra

APS = "ap a := x >= 1/2;\nap b := y >= 1/2;\n"
EVENTUALLY_A = APS + "states 2;\ninitial 0;\nedge 0 : !a -> 0;\nedge 0 : a -> 1;\nedge 1 : true -> 1;\npair E={} F={1};"
EVENTUALLY_B = APS + "states 2;\ninitial 0;\nedge 0 : !b -> 0;\nedge 0 : b -> 1;\nedge 1 : true -> 1;\npair E={} F={1};"
# finitely many a, infinitely many b
FG_NOT_A_GF_B = APS + """states 4;
initial 0;
edge 0 : !a & !b -> 0; edge 0 : !a & b -> 1; edge 0 : a & !b -> 2; edge 0 : a & b -> 3;
edge 1 : !a & !b -> 0; edge 1 : !a & b -> 1; edge 1 : a & !b -> 2; edge 1 : a & b -> 3;
edge 2 : !a & !b -> 0; edge 2 : !a & b -> 1; edge 2 : a & !b -> 2; edge 2 : a & b -> 3;
edge 3 : !a & !b -> 0; edge 3 : !a & b -> 1; edge 3 : a & !b -> 2; edge 3 : a & b -> 3;
pair E={2, 3} F={1};"""
LETTERS = [frozenset(s) for s in (set(), {"a"}, {"b"}, {"a", "b"})]


def lassos(max_len, extra=3000, seed=0):
    for n in range(1, max_len + 1):
        for word in itertools.product(LETTERS, repeat=n):
            for split in range(n):
                yield word[:split], word[split:]
    rng = random.Random(seed)
    for _ in range(extra):
        n = rng.randint(1, 8)
        word = [rng.choice(LETTERS) for _ in range(n)]
        split = rng.randrange(n)
        yield word[:split], word[split:]


def test_pair_combination_rules():
    assert combine_pair(0.9, 0.8, 1.0, 1.0) == pytest.approx((0.72, 1.0))
    assert combine_pair(0.9, 0.8, 0.95, 0.9, conservative=True) == pytest.approx((0.7, 0.855))
    assert combine_pairs([(0.2, 0.5), (0.3, 0.7)]) == pytest.approx((0.3, 1.0))
    assert combine_pairs([(0.2, 0.3), (0.1, 0.4)]) == pytest.approx((0.2, 0.7))


def test_tpd_example():
    out = compute_tpd(BoundInterval(0.17385, 0.37294), BoundInterval(0.5, 0.75356))
    assert out.lower == pytest.approx(0.17385 / 0.75356)
    assert out.upper == pytest.approx(0.37294 / 0.5)


def test_tpd_zero_denominator():
    with pytest.raises(TpdError):
        compute_tpd(BoundInterval(0.1, 0.2), BoundInterval(0.0, 0.0))
    with pytest.warns(RuntimeWarning):
        out = compute_tpd(BoundInterval(0.1, 0.2), BoundInterval(0.0, 0.5))
    assert out.upper == 1.0 and out.notes


unit = st.floats(0.0, 1.0)


@given(unit, unit, st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_tpd_interval_is_ordered_and_clamped(a, b, c, d):
    num = BoundInterval(min(a, b), max(a, b))
    den = BoundInterval(min(c, d), max(c, d))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = compute_tpd(num, den)
    assert 0 <= out.lower <= out.upper <= 1


@given(unit, unit, unit, st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_tpd_monotone_in_numerator(a, b, widen, c, d):
    lo, hi = min(a, b), max(a, b)
    den = BoundInterval(min(c, d), max(c, d))
    narrow = compute_tpd(BoundInterval(lo, hi), den)
    wide = compute_tpd(BoundInterval(lo * (1 - widen), min(1.0, hi + widen)), den)
    assert wide.lower <= narrow.lower + 1e-12 and wide.upper >= narrow.upper - 1e-12


def test_interval_clamps_and_flags_without_swapping():
    b = BoundInterval(-0.2, 1.3)
    assert (b.lower, b.upper, b.status) == (0.0, 1.0, "ok")
    bad = BoundInterval(0.6, 0.4)
    assert bad.status == "inconsistent" and (bad.lower, bad.upper) == (0.6, 0.4)


def test_universal_is_conjunction_identity(fig1b):
    both = conjoin_dras(universal_dra(), fig1b)
    other = conjoin_dras(fig1b, universal_dra())
    for p, c in lassos(4, extra=500):
        want = lasso_accepts(fig1b, p, c)
        assert lasso_accepts(both, p, c) == want
        assert lasso_accepts(other, p, c) == want


def test_conjunction_of_eventualities_matches_fig1b(fig1b):
    conj = conjoin_dras(parse_dra(EVENTUALLY_A), parse_dra(EVENTUALLY_B))
    for p, c in lassos(5):
        assert lasso_accepts(conj, p, c) == lasso_accepts(fig1b, p, c)


def test_rabin_and_buchi_conjunction():
    rabin, buchi = parse_dra(FG_NOT_A_GF_B), parse_dra(EVENTUALLY_A)
    conj = conjoin_dras(rabin, buchi)
    for p, c in lassos(5):
        want = lasso_accepts(rabin, p, c) and lasso_accepts(buchi, p, c)
        assert lasso_accepts(conj, p, c) == want


def test_two_multi_pair_automata_rejected():
    d = load_dra("re2_c2_two_pairs.dra")
    with pytest.raises(ConjunctionError):
        conjoin_dras(d, d)


def test_buchi_pair_skips_persistence_side(re1):
    report = verify_property(VerificationTask(re1, load_dra("re1_f.dra"), k=1, degree_fin=1, degree_inf=1))
    (pair,) = report.pairs
    assert pair.l_fin == pair.u_fin == 1.0
    assert "lower_fin" not in pair.solves
    assert 0 <= report.interval.lower <= report.interval.upper <= 1


def test_no_certificate_gives_unit_interval(re2, re2_c2):
    task = VerificationTask(re2, re2_c2, k=1, degree_fin=2, degree_inf=2, relaxation_degree=1)
    iv = verify_property(task).interval
    assert iv.status == NO_CERTIFICATE
    assert (iv.lower, iv.upper) == (0.0, 1.0)


@pytest.mark.parametrize("k", [0, 2])
def test_sides_sandwich_exact_counter_events(re2_bounded, re2_c3, k):
    # each side bounds the k-times event, which only approaches the property as k grows
    report = verify_property(VerificationTask(re2_bounded, re2_c3, k=k, degree_fin=2, degree_inf=2))
    (pair,) = report.pairs
    (E, F), = [(p.E, p.F) for p in re2_c3.pairs]
    fin = counter_event_probability(build_finite_chain(ProductSystem(re2_bounded, re2_c3, E, FOV, k)), k)
    inf = counter_event_probability(build_finite_chain(ProductSystem(re2_bounded, re2_c3, F, IOV, k)), k)
    assert pair.l_fin - 1e-7 <= fin <= pair.u_fin + 1e-7
    assert pair.l_inf - 1e-7 <= inf <= pair.u_inf + 1e-7
    assert report.interval.status == "ok" and report.interval.provenance["k"] == k
