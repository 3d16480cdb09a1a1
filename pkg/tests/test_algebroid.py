import itertools
from fractions import Fraction

import numpy as np
import pytest

from groupoid_index.algebroid import (
    AlgebroidForm, ComplexTooLargeError, StructureError, abelian, affine, ce_cohomology, ce_differential,
    check_structure, dual_basis_form, from_data, function_form, heisenberg, lie_algebra, modular_cocycle,
    pullback_algebroid, su2, tangent_chart, tangent_torus, theta_matrix, wedge,
)
from groupoid_index.scalars import chart_ring, cos_mode, sin_mode

from oracles import lie_betti


def _num(v):
    return Fraction(v.re) if hasattr(v, "re") else Fraction(v)


def _dense(A):
    r = A.rank
    return [[[_num(A.c(i, j, k).constant_term()) for k in range(r)] for j in range(r)] for i in range(r)]


def _raw(brackets, r):
    c = [[[0] * r for _ in range(r)] for _ in range(r)]
    for (i, j), d in brackets.items():
        for k, v in d.items():
            c[i][j][k], c[j][i][k] = v, -v
    return c


_EPS = {(0, 1): {2: 1}, (1, 2): {0: 1}, (2, 0): {1: 1}}


def test_structure_valid_examples():
    assert check_structure(su2()) == []
    assert check_structure(abelian(3)) == []
    assert check_structure(tangent_torus(2, 2)) == []


def test_structure_reports_antisymmetry_violation():
    bad = lie_algebra([[[0, 0], [1, 0]], [[1, 0], [0, 0]]])
    found = check_structure(bad)
    assert any(d["identity"] == "antisymmetry" for d in found)


def test_structure_reports_anchor_violation():
    R = chart_ring(1)
    x = R.gen("x1")
    # rho(e1) = d/dx, rho(e2) = x d/dx but [e1, e2] = 0
    A = from_data(R, [[R.one()], [x]], [[[0, 0], [0, 0]], [[0, 0], [0, 0]]])
    assert any(d["identity"] == "anchor" for d in check_structure(A))


def test_ce_abelian_is_zero():
    A = abelian(3)
    a = AlgebroidForm(1, {(0,): A.ring.const(2), (2,): A.ring.const(-1)}, A.ring)
    assert ce_differential(A, a).is_zero()


def test_ce_su2_dual_form():
    # standard CE signs: d xi^1 (e2, e3) = -xi^1([e2, e3]) = -1
    A = su2()
    d = ce_differential(A, dual_basis_form(A, 0))
    assert d.value((1, 2)).constant_term() == -1
    assert d.value((2, 1)).constant_term() == 1


def test_ce_torus_function():
    A = tangent_torus(1, 3)
    f = cos_mode(A.ring, "t1", 2)
    df = ce_differential(A, function_form(A, f))
    assert df[(0,)] == f.diff("t1")
    assert df[(0,)] == sin_mode(A.ring, "t1", 2) * (-2)


@pytest.mark.parametrize("A", [su2(), heisenberg(), affine(), abelian(3), tangent_chart(2, 4)],
                         ids=lambda A: A.name)
def test_ce_squares_to_zero(A):
    rng = np.random.default_rng(5)
    for k in range(A.rank - 1):
        for I in itertools.combinations(range(A.rank), k):
            coef = A.ring.const(int(rng.integers(1, 5)))
            if A.ring.names:
                coef = coef * A.ring.gen(A.ring.names[0])
            a = AlgebroidForm(k, {I: coef}, A.ring)
            assert ce_differential(A, ce_differential(A, a)).is_zero()


def test_ce_leibniz_on_wedge():
    A = su2()
    a, b = dual_basis_form(A, 0), dual_basis_form(A, 1)
    lhs = ce_differential(A, wedge(a, b))
    rhs = wedge(ce_differential(A, a), b) - wedge(a, ce_differential(A, b))
    assert lhs == rhs


@pytest.mark.parametrize("A,raw,expected", [
    (abelian(2), _raw({}, 2), [1, 2, 1]),
    (su2(), _raw(_EPS, 3), [1, 0, 0, 1]),
    (heisenberg(), _raw({(0, 1): {2: 1}}, 3), [1, 2, 2, 1]),
    (affine(), _raw({(0, 1): {1: 1}}, 2), [1, 1, 0]),
], ids=["abelian2", "su2", "h3", "affine"])
def test_betti_against_oracle(A, raw, expected):
    assert _dense(A) == raw
    assert ce_cohomology(A).betti == expected
    assert lie_betti(raw) == expected


def test_betti_torus_truncation_is_stable():
    rep = ce_cohomology(tangent_torus(1, 2))
    assert rep.betti == [1, 1]
    assert all(rep.stable)


def test_cohomology_size_cap():
    with pytest.raises(ComplexTooLargeError):
        ce_cohomology(tangent_torus(2, 6), max_size=50)


def test_modular_cocycle_examples():
    assert modular_cocycle(abelian(2)).is_zero()
    assert modular_cocycle(su2()).is_zero()
    th = modular_cocycle(affine())
    assert _num(th[(0,)].constant_term()) == -1
    assert th[(1,)].is_zero()


def test_modular_cocycle_matches_trace_oracle():
    for A in (affine(), heisenberg(), lie_algebra({(0, 1): {1: 2, 0: 1}, (0, 2): {2: -3}})):
        th = modular_cocycle(A)
        c = _dense(A)
        for j in range(A.rank):
            assert _num(th[(j,)].constant_term()) == sum(c[i][j][i] for i in range(A.rank))


def test_modular_cocycle_changes_by_exact_form():
    A = tangent_chart(1, 4)
    x = A.ring.gen("x1")
    eta = x * x * Fraction(1, 2) + x
    diff = modular_cocycle(A) - modular_cocycle(A, log_density=eta)
    assert diff == ce_differential(A, function_form(A, eta))


def test_pullback_abelian():
    pb = pullback_algebroid(abelian(2))
    P = pb.algebroid
    assert P.rank == 4 and check_structure(P) == []
    T = theta_matrix(pb)
    for i in range(2):
        for j in range(2):
            assert T[i][2 + j].constant_term() == (1 if i == j else 0)
            assert T[i][j].is_zero()


def test_pullback_su2_theta():
    pb = pullback_algebroid(su2())
    P = pb.algebroid
    assert P.rank == 6 and P.ring.names == ("xi1", "xi2", "xi3")
    assert ce_differential(P, pb.theta).is_zero()
    T = theta_matrix(pb)
    for i in range(3):
        for j in range(3):
            assert T[i][3 + j].constant_term() == (1 if i == j else 0)
    # Theta(l_1, l_2) = c^k_12 xi_k = xi_3
    assert T[0][1] == P.ring.gen("xi3")


def test_pullback_tangent_torus():
    pb = pullback_algebroid(tangent_torus(1, 2))
    assert pb.algebroid.rank == 2
    assert pb.theta.value((0, 1)).constant_term() == 1


def test_pullback_rejects_broken_source():
    bad = lie_algebra([[[0, 0], [1, 0]], [[1, 0], [0, 0]]])
    with pytest.raises(StructureError):
        pullback_algebroid(bad)
