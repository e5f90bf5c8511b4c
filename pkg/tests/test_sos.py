import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssvcert.errors import InfeasibleError
from ssvcert.sos import (InfeasibleReport, Poly, PolynomialSystem, PseudoExpectation, check_sos_proof,
                         monomials, parse_poly, parse_system, pe_inequalities_check,
                         require_feasible, solve_pseudo_expectation)


def test_boolean_max():
    pe = solve_pseudo_expectation(parse_system("var w; eq w*w - w; ge w; deg 2; obj w"))
    assert abs(pe(parse_poly("w", ["w"])) - 1) < 1e-5


def test_simplex_selector_feasible():
    s = parse_system("var w1 w2 w3; eq w1+w2+w3-1; eq w1*w1-w1; eq w2*w2-w2; eq w3*w3-w3; deg 2")
    pe = require_feasible(solve_pseudo_expectation(s))
    assert abs(pe.moments[(0, 0, 0)] - 1) < 1e-7
    assert np.linalg.eigvalsh(pe.moment_matrix())[0] > -1e-7
    total = sum(pe.moments[e] for e in [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
    assert abs(total - 1) < 1e-7


def test_uniform_moments_are_feasible_point():
    # actual distribution: uniform over the three indicator vectors
    s = parse_system("var w1 w2 w3; eq w1+w2+w3-1; eq w1*w1-w1; eq w2*w2-w2; eq w3*w3-w3; deg 2")
    pts = np.eye(3)
    mom = {e: float(np.mean([np.prod(p ** np.array(e)) for p in pts])) for e in monomials(3, 2)}
    pe = PseudoExpectation(3, 2, mom)
    assert abs(pe(parse_poly("w1", s.variables)) - 1 / 3) < 1e-12
    for q in s.equalities:
        assert abs(pe(q)) < 1e-12
    assert np.linalg.eigvalsh(pe.moment_matrix())[0] > -1e-12


def test_infeasible_square():
    r = solve_pseudo_expectation(parse_system("var x; eq x*x + 1; deg 2"))
    assert isinstance(r, InfeasibleReport) and not r
    with pytest.raises(InfeasibleError):
        require_feasible(r)


def test_sum_of_squares_two_terms():
    s = parse_system("var x y; deg 2")
    assert check_sos_proof(s, parse_poly("2*x**2 + 2*y**2 - (x+y)**2", s.variables))


def test_x_nonnegative_refuted():
    s = parse_system("var x; deg 2")
    r = check_sos_proof(s, parse_poly("x", ["x"]))
    assert not r
    assert isinstance(r.witness, PseudoExpectation)
    assert r.witness(parse_poly("x", ["x"])) < -1e-6


def test_cauchy_schwarz_degree4():
    s = parse_system("var a b c e; deg 4")
    t = parse_poly("(a**2 + b**2)*(c**2 + e**2) - (a*c + b*e)**2", s.variables)
    assert check_sos_proof(s, t, degree=4)


def test_power_triangle_p4():
    s = parse_system("var x y; deg 4")
    assert check_sos_proof(s, parse_poly("8*(x**4 + y**4) - (x+y)**4", s.variables), degree=4)
    # the inequality is tight, so a slightly smaller constant fails
    assert not check_sos_proof(s, parse_poly("7*(x**4 + y**4) - (x+y)**4", s.variables), degree=4)


def test_pe_cauchy_schwarz_battery():
    s = parse_system("var x y; ge 1 - x**2 - y**2; deg 4; obj x + y")
    pe = require_feasible(solve_pseudo_expectation(s))
    rep = pe_inequalities_check(pe, s)
    assert rep["ok"], rep


def test_pe_battery_flags_non_psd():
    mom = {(0,): 1.0, (1,): 2.0, (2,): 1.0}   # (pE x)^2 = 4 > pE x^2
    rep = pe_inequalities_check(PseudoExpectation(1, 2, mom))
    assert not rep["ok"]


def test_degree_validation():
    with pytest.raises(ValueError):
        parse_system("var x; ge x**4; deg 2")
    with pytest.raises(ValueError):
        parse_system("eq x; var x")


def test_determinism():
    s = parse_system("var x y; ge 1 - x**2 - y**2; deg 2; obj x + 2*y")
    a = solve_pseudo_expectation(s)
    b = solve_pseudo_expectation(s)
    for k in a.moments:
        assert abs(a.moments[k] - b.moments[k]) < 1e-8


@settings(max_examples=8, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_weak_duality_on_random_systems(c):
    # a true SoS target: any pE solving the ball system gives it a nonnegative value
    s = parse_system("var x y; ge 1 - x**2 - y**2; deg 4")
    names = s.variables
    obj = parse_poly(f"{c[0]}*x + {c[1]}*y + {c[2]}*x*y + {c[3]}*x**2", names)
    pe = require_feasible(solve_pseudo_expectation(s, obj, "max"))
    target = parse_poly("2*x**2 + 2*y**2 - (x+y)**2", names)
    assert check_sos_proof(s, target, degree=4)
    assert pe(target) >= -1e-5
