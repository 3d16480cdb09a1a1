from fractions import Fraction

import numpy as np
import pytest

from groupoid_index.groupoid_finite import (
    ConvolutionElement, GroupoidCochain, GroupoidError, LocalizedIdempotent, UnitalMatrix, action_groupoid,
    char_chi, chern_connes_pair, conjugate_idempotent, convolve, cyclic_group, cyclic_tau, delta_element,
    diff_d, diff_d_array, faces, from_homogeneous, homogeneous_convert, homogeneous_d, matrix_idempotent_on_pair,
    modular_function, modular_log_cocycle_check, modular_witness, pair_groupoid, random_cochain,
    support_boundary, support_product, symmetric_group3, tau_table, to_homogeneous, trace_omega, unit_element,
)

from oracles import matrix_rank, random_idempotent


def _rand_elem(G, rng, lo=-3, hi=3):
    return ConvolutionElement(G, {g: Fraction(int(rng.integers(lo, hi + 1))) for g in G.arrows()})


def _arrow(n, x, y):
    return x * n + y


def test_face_maps_on_pairs():
    G = pair_groupoid(3)
    g1, g2 = _arrow(3, 0, 1), _arrow(3, 1, 2)
    assert faces(G, (g1, g2), 0) == (g2,)
    assert faces(G, (g1, g2), 1) == (_arrow(3, 0, 2),)
    assert faces(G, (g1, g2), 2) == (g1,)
    with pytest.raises(GroupoidError):
        faces(G, (g1, g2), 3)


def test_degree_zero_differential():
    G = pair_groupoid(2)
    phi = GroupoidCochain(G, 0, {(0,): 1, (1,): 0})
    assert diff_d(phi)((_arrow(2, 0, 1),)) == 1
    const = GroupoidCochain(G, 0, {(0,): 3, (1,): 3})
    assert diff_d(const).is_zero()


@pytest.mark.parametrize("G", [pair_groupoid(3), symmetric_group3(), cyclic_group(4)],
                         ids=["pair3", "S3", "Z4"])
def test_d_squared_and_tau_order(G):
    rng = np.random.default_rng(11)
    for k in range(4):
        phi = random_cochain(G, k, rng)
        assert diff_d(diff_d(phi)).is_zero()
        if k >= 1:
            t = phi
            for _ in range(k + 1):
                t = cyclic_tau(t)
            assert t == phi


def test_batched_coboundary_matches_scalar_path():
    rng = np.random.default_rng(5)
    for G in (pair_groupoid(3), symmetric_group3()):
        for k in range(3):
            X = rng.integers(-5, 6, size=(len(G.nerve(k)), 2))
            phi = GroupoidCochain(G, k, {T: Fraction(int(X[r, 0])) for r, T in enumerate(G.nerve(k))})
            D = diff_d_array(G, k, X)
            ref = diff_d(phi)
            assert all(ref(T) == D[r, 0] for r, T in enumerate(G.nerve(k + 1)))
            if k:
                p = tau_table(G, k)
                tp = cyclic_tau(phi)
                assert all(tp(T) == X[p[r], 0] for r, T in enumerate(G.nerve(k)))
    with pytest.raises(GroupoidError):
        diff_d_array(pair_groupoid(2), 0, np.zeros((2, 1)))


def test_tau_degree_one_is_inversion():
    G = symmetric_group3()
    rng = np.random.default_rng(2)
    phi = random_cochain(G, 1, rng)
    tp = cyclic_tau(phi)
    assert all(tp((g,)) == phi((G.inv[g],)) for g in G.arrows())


def test_tau_squared_on_group_by_enumeration():
    G = cyclic_group(3)
    rng = np.random.default_rng(3)
    phi = random_cochain(G, 2, rng)
    t2 = cyclic_tau(cyclic_tau(phi))
    for a in G.arrows():
        for b in G.arrows():
            # tau(g1, g2) = phi((g1 g2)^-1, g1); applied twice gives phi(g2, (g1 g2)^-1)
            assert t2((a, b)) == phi((b, G.inv[G.mul(a, b)]))


def test_tau_rejects_degree_zero():
    G = pair_groupoid(2)
    with pytest.raises(GroupoidError):
        cyclic_tau(GroupoidCochain(G, 0, {}))


def test_convolution_is_matrix_product_on_pair_groupoid():
    rng = np.random.default_rng(4)
    n = 3
    G = pair_groupoid(n)
    a, b = _rand_elem(G, rng), _rand_elem(G, rng)
    A = [[a(_arrow(n, x, y)) for y in range(n)] for x in range(n)]
    B = [[b(_arrow(n, x, y)) for y in range(n)] for x in range(n)]
    AB = [[sum(A[x][z] * B[z][y] for z in range(n)) for y in range(n)] for x in range(n)]
    c = convolve(a, b)
    assert all(c(_arrow(n, x, y)) == AB[x][y] for x in range(n) for y in range(n))


def test_convolution_units_and_support():
    G = symmetric_group3()
    u = unit_element(G)
    rng = np.random.default_rng(6)
    a = _rand_elem(G, rng)
    assert convolve(u, a) == a and convolve(a, u) == a
    G2 = pair_groupoid(3)
    uu = convolve(unit_element(G2), unit_element(G2))
    assert uu.nonzero_support() <= set(G2.unit)


def test_trace_examples():
    G = pair_groupoid(3)
    om = [2, 3, 5]
    for x in range(3):
        assert trace_omega(delta_element(G, G.unit[x]), om) == om[x]
    rng = np.random.default_rng(7)
    f, g = _rand_elem(G, rng), _rand_elem(G, rng)
    assert trace_omega(convolve(f, g) - convolve(g, f)) == 0
    assert trace_omega(f) == sum(f(_arrow(3, x, x)) for x in range(3))


def test_modular_function_examples():
    G = pair_groupoid(2)
    assert all(v == 1 for v in modular_function(G, None).values.values())
    d = modular_function(G, [1, 2])
    assert d((_arrow(2, 0, 1),)) == Fraction(1, 2)
    assert modular_log_cocycle_check(pair_groupoid(3), [1, 2, 7]) == []
    eta = modular_witness(G, [1, 2])
    assert all(d((g,)) == eta[G.s[g]] / eta[G.t[g]] for g in G.arrows())


def test_modular_rejects_nonpositive_density():
    with pytest.raises(GroupoidError):
        modular_function(pair_groupoid(2), [1, 0])


def test_chi_constant_cochain_is_trace_of_product():
    G = pair_groupoid(3)
    rng = np.random.default_rng(8)
    a = [_rand_elem(G, rng) for _ in range(3)]
    one = GroupoidCochain(G, 2, {T: Fraction(1) for T in G.nerve(2)})
    assert char_chi(one, a) == trace_omega(convolve(convolve(a[0], a[1]), a[2]))


def test_chi_degree_one_hand_evaluation():
    G = pair_groupoid(2)
    xy, yx = _arrow(2, 0, 1), _arrow(2, 1, 0)
    phi = GroupoidCochain(G, 1, {(xy,): Fraction(5), (yx,): Fraction(7)})
    a0 = delta_element(G, yx, 2)
    a1 = delta_element(G, xy, 3)
    # only g1 = x->y, g0 = y->x with g0 g1 = 1_y contributes
    assert char_chi(phi, [a0, a1]) == 2 * 3 * 5


def test_chi_cyclicity():
    rng = np.random.default_rng(9)
    for G in (pair_groupoid(3), symmetric_group3()):
        phi = random_cochain(G, 2, rng)
        a = [_rand_elem(G, rng) for _ in range(3)]
        assert char_chi(cyclic_tau(phi), a) == char_chi(phi, [a[2], a[0], a[1]])


def test_homogeneous_round_trip_and_differential():
    G = pair_groupoid(3)
    rng = np.random.default_rng(10)
    psi = random_cochain(G, 2, rng)
    h = homogeneous_convert(psi, "to_homogeneous")
    assert homogeneous_convert(h, "to_inhomogeneous", G, 2) == psi
    psi1 = random_cochain(G, 1, rng)
    assert to_homogeneous(diff_d(psi1)) == homogeneous_d(G, 1, to_homogeneous(psi1))


def test_homogeneous_rejects_non_invariant():
    G = pair_groupoid(2)
    T = next(iter(to_homogeneous(random_cochain(G, 1, np.random.default_rng(0)))))
    with pytest.raises(GroupoidError):
        from_homogeneous(G, 1, {T: Fraction(1)})


def test_support_products():
    G = pair_groupoid(4)
    units = frozenset(G.unit)
    assert support_boundary(G, units) == units
    everything = frozenset(G.arrows())
    assert support_boundary(G, everything) == everything
    U = units | {_arrow(4, 0, 1), _arrow(4, 1, 2)}
    brute = {G.mul(a, b) for a in U for b in U if G.t[a] == G.s[b]}
    assert support_product(G, U, U) == brute
    assert _arrow(4, 0, 2) in brute


@pytest.mark.parametrize("n,rank", [(3, 1), (4, 2), (5, 3)])
def test_pairing_rank_law(n, rank):
    M = random_idempotent(n, rank, np.random.default_rng(n * 10 + rank))
    assert matrix_rank(M) == rank
    idem = matrix_idempotent_on_pair(n, M)
    assert idem.residual_ok()
    assert chern_connes_pair({0: 1}, idem)["total"] == rank


def test_pairing_zerorandom_idempotent():
    idem = matrix_idempotent_on_pair(3, [[0] * 3 for _ in range(3)])
    assert chern_connes_pair({0: 1}, idem)["total"] == 0


def test_pairing_rejects_nonrandom_idempotent():
    idem = matrix_idempotent_on_pair(2, [[2, 0], [0, 0]])
    with pytest.raises(GroupoidError):
        chern_connes_pair({0: 1}, idem)


def test_pairing_conjugation_invariance():
    n = 3
    M = random_idempotent(n, 2, np.random.default_rng(1))
    idem = matrix_idempotent_on_pair(n, M)
    G = idem.P.G
    # W = 1 + N with N nilpotent (strictly upper-triangular kernel), W^-1 = 1 - N + N^2
    N = ConvolutionElement(G, {_arrow(n, 0, 1): Fraction(2), _arrow(n, 1, 2): Fraction(-1)})
    W = UnitalMatrix(G, [[1]], [[N]])
    Winv = UnitalMatrix(G, [[1]], [[convolve(N, N) - N]])
    conj = conjugate_idempotent(idem, W, Winv)
    assert conj.residual_ok()
    assert chern_connes_pair({0: 1}, conj)["total"] == 2


def test_pairing_degree_two_on_exact_cochain_vanishes():
    n = 3
    rng = np.random.default_rng(12)
    idem = matrix_idempotent_on_pair(n, random_idempotent(n, 1, rng))
    G = idem.P.G
    psi = random_cochain(G, 1, rng)
    # antisymmetric under inversion, so chi(psi) is cyclic and chi(d psi) a cyclic coboundary
    anti = (psi - cyclic_tau(psi)).scale(Fraction(1, 2))
    out = chern_connes_pair({2: diff_d(anti)}, idem)
    assert out["by_degree"][2] == 0


def test_localized_window_checks():
    G = pair_groupoid(2)
    M = [[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 2), Fraction(1, 2)]]
    P = matrix_idempotent_on_pair(2, M).P
    with pytest.raises(GroupoidError):
        LocalizedIdempotent(P, frozenset(G.unit))
    assert LocalizedIdempotent(P, frozenset(G.arrows())).residual_ok()


def test_action_groupoid_is_valid():
    table = [[(a + b) % 2 for b in range(2)] for a in range(2)]
    G = action_groupoid(3, table, lambda x, a: x if a == 0 else [1, 0, 2][x])
    assert G.n_objects == 3 and G.n_arrows == 6
    rng = np.random.default_rng(13)
    phi = random_cochain(G, 2, rng)
    assert diff_d(diff_d(phi)).is_zero()
