import numpy as np
import pytest

from groupoid_index.germ_vanest import GermCochain, LocalGroupoidModel, germ_diff
from groupoid_index.algebroid import tangent_chart
from groupoid_index.oracle_ops import (
    LocalizationError, OracleError, circle_model, fredholm_index_oracle, hermite_functions, localized_pairing_lhs,
    operator_spec, oscillator_model, pairing_on_grid, parametrix_idempotent, truncate,
)


@pytest.mark.parametrize("desc,expected", [
    ("d/dx + x", 1),
    ("-d/dx + x", -1),
    ("-i d/dtheta", 0),
    ("-i d/dtheta + 0.5", 0),
    ({"basis": "diagonal", "values": [0, 1, 2, 3]}, 0),
])
def test_fredholm_index(desc, expected):
    rep = fredholm_index_oracle(desc)
    assert rep.stabilized
    assert rep.index == expected


def test_fredholm_needs_three_sizes():
    with pytest.raises(OracleError):
        fredholm_index_oracle("d/dx + x", schedule=(10, 20))


def test_unknown_operator_rejected():
    with pytest.raises(OracleError):
        operator_spec("laplacian")


def test_truncation_shapes():
    assert truncate("d/dx + x", 5).matrix.shape == (6, 6)
    assert truncate("-i d/dtheta", 5).matrix.shape == (11, 11)


def test_hermite_functions_orthonormal():
    x = np.linspace(-12, 12, 4001)
    H = hermite_functions(8, x)
    G = (H.T * (x[1] - x[0])) @ H
    assert np.allclose(G, np.eye(9), atol=1e-10)


def test_parametrix_oscillator():
    P = parametrix_idempotent(oscillator_model(60, 128, 10.0), 0.25)
    assert P.residual < 1e-12 and P.formula_gap < 1e-10
    assert abs(P.trace() - 1) < 1e-12
    assert abs(pairing_on_grid({0: 1}, P)["total"] - 1) < 1e-10


def test_parametrix_circle_trace_vanishes():
    P = parametrix_idempotent(circle_model(60, 128), 0.05)
    assert abs(P.trace()) < 1e-12


def test_circle_kernel_leakage():
    P = parametrix_idempotent(circle_model(200, 512), 0.001, window=0.5)
    assert P.leakage < 1e-8


def test_leaking_kernel_rejected():
    with pytest.raises(LocalizationError):
        parametrix_idempotent(oscillator_model(60, 128), 1.0, window=0.5, check_window=True)
    P = parametrix_idempotent(oscillator_model(60, 128), 0.25)
    with pytest.raises(LocalizationError):
        localized_pairing_lhs({0: 1}, P, window=0.5)


def test_circle_model_needs_resolved_grid():
    with pytest.raises(OracleError):
        circle_model(60, 100)


def test_degree_two_pairing_on_exact_cochain():
    P = parametrix_idempotent(oscillator_model(60, 128, 10.0), 0.25)
    # d of the inversion-odd 1-cochain v^3
    exact = lambda x0, vs: -3 * vs[0] * vs[1] * (vs[0] + vs[1])
    rep = localized_pairing_lhs({0: 1, 2: exact}, P)
    assert abs(rep.by_degree[2]) < 1e-10
    assert abs(rep.value - 1) < 1e-10
    # a cochain that is not a cocycle gives a visibly nonzero number
    control = pairing_on_grid({2: lambda x0, vs: x0 * vs[0] * vs[1] ** 2}, P)["total"]
    assert abs(control) > 0.1


def test_germ_cochain_on_grid():
    m = LocalGroupoidModel(tangent_chart(1), cap=4, max_degree=3)
    v = m.ring.gen("v1_1")
    psi = GermCochain(m, 1, v * v * v)
    P = parametrix_idempotent(oscillator_model(60, 128, 10.0), 0.25)
    out = pairing_on_grid({2: germ_diff(psi)}, P)["total"]
    assert abs(out) < 1e-10
