from fractions import Fraction

import pytest

from omegacert import conditions as cnd
from omegacert.certgen import LOWER_FOV, UPPER_FOV, CertificateProblem, Entailment
from omegacert.martingale import MartingaleConfig, martingale_check
from omegacert.poly import AffineForm, Poly
from omegacert.product import FOV, ProductSystem
from omegacert.solver import (
    INFEASIBLE, OPTIMAL, REJECTED, UNSUPPORTED, EliminationError, LinearProgram, build_lp, eliminate,
    farkas_eliminate, handelman_eliminate, identity_rows, solve, solve_entailment_system, synthesize,
    synthesize_best,
)

x = Poly.var("x")
UNIT = (cnd.Constraint.make(x, cnd.GE), cnd.Constraint.make(1 - x, cnd.GE))


def ent(premise, conclusion):
    return Entailment(("t",), tuple(premise), conclusion)


def param(**coeffs):
    """Conclusion a*x + b with AffineForm coefficients."""
    return Poly({m: AffineForm(c) for m, c in coeffs.items()})


def test_farkas_identity_rows():
    e = ent(UNIT[:1], 2 * x + 3)
    el = farkas_eliminate(e)
    assert el.generators[0] == Poly.const(1)
    rows = dict((m, (c, g)) for m, c, g in identity_rows(el))
    assert rows[()] == (3, [1, 0])
    assert rows[(("x", 1),)] == (2, [0, 1])


def test_farkas_true_and_false_entailments():
    assert solve_entailment_system([ent(UNIT, 2 - x)]).status == OPTIMAL
    assert solve_entailment_system([ent(UNIT[:1], 1 - x)]).status in (INFEASIBLE, REJECTED)


def test_farkas_optimizes_free_unknowns():
    # x in [0, 1] ==> -x + b >= 0; smallest b is 1
    concl = Poly({(("x", 1),): AffineForm({}, -1), (): AffineForm({"b": 1})})
    sol = solve_entailment_system([ent(UNIT, concl)], objective={"b": 1})
    assert sol.status == OPTIMAL
    assert float(sol.values["b"]) == pytest.approx(1, abs=1e-9)


def test_handelman_quadratics():
    assert solve_entailment_system([ent(UNIT, x - x * x)], relaxation_degree=2).status == OPTIMAL
    bad = x * x - x - Fraction(1, 10)
    assert solve_entailment_system([ent(UNIT, bad)], relaxation_degree=2).status in (INFEASIBLE, REJECTED)


def test_handelman_generators_are_normalized():
    el = handelman_eliminate(ent(UNIT, x * x), 2)
    for g in el.generators:
        assert max(abs(c) for c in g.terms.values()) == 1


def test_elimination_errors():
    with pytest.raises(EliminationError):
        farkas_eliminate(ent(UNIT, x * x))
    with pytest.raises(EliminationError):
        handelman_eliminate(ent(UNIT, x * x * x), 2)
    with pytest.raises(EliminationError):
        handelman_eliminate(ent((cnd.Constraint.make(x * x, cnd.GE),), x), 2)
    assert eliminate(ent(UNIT, x)).generators == farkas_eliminate(ent(UNIT, x)).generators


def test_empty_program_is_optimal():
    assert solve(LinearProgram()).status == OPTIMAL


def test_lp_text_is_deterministic(re2, re2_c2):
    def text():
        psys = ProductSystem(re2, re2_c2, {1}, FOV, 1)
        return build_lp(CertificateProblem(psys, LOWER_FOV, 2)).to_lp_format()
    a, b = text(), text()
    assert a == b
    assert a.startswith("\\ x0 = ") and "Subject To" in a and a.rstrip().endswith("End")


def test_relaxation_degree_is_monotone(re2, re2_c2):
    psys = ProductSystem(re2, re2_c2, {1}, FOV, 1)
    bounds = []
    for D in (2, 3):
        out = synthesize(CertificateProblem(psys, LOWER_FOV, 2), relaxation_degree=D)
        assert out.status == OPTIMAL
        bounds.append(float(out.certificate.bound))
    assert bounds[1] >= bounds[0] - 1e-7


def test_relaxation_below_template_degree_is_unsupported(re2, re2_c2):
    psys = ProductSystem(re2, re2_c2, {1}, FOV, 1)
    out = synthesize(CertificateProblem(psys, LOWER_FOV, 2), relaxation_degree=1)
    assert out.status == UNSUPPORTED and out.certificate is None


def test_upper_certificate_passes_sampling(re2, re2_c2):
    psys = ProductSystem(re2, re2_c2, {1}, FOV, 2)
    out = synthesize_best(psys, UPPER_FOV, 2)
    assert out.status == OPTIMAL
    cert = out.certificate
    assert cert.residual <= 1e-9
    assert 0 <= cert.bound <= 1
    report = martingale_check(cert, psys, MartingaleConfig(states=300, seed=1))
    assert report.ok()


def test_lambda_below_one_forces_gamma(re2, re2_c2):
    psys = ProductSystem(re2, re2_c2, {1}, FOV, 1)
    out = synthesize(CertificateProblem(psys, UPPER_FOV, 1, alpha=Fraction(9, 10), lam=Fraction(1, 2)))
    if out.status == OPTIMAL:
        assert out.certificate.gamma >= Fraction(1, 2) - Fraction(1, 10 ** 9)
