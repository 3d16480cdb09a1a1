"""Independent reference computations used by the tests.

Nothing here imports the library; inputs are plain structure constants and
numbers, and sympy does the exact linear algebra.
"""

import itertools
from fractions import Fraction

import sympy


def lie_betti(c):
    """Betti numbers of the CE complex of a Lie algebra with ``c[i][j][k] = c^k_ij``.

    Builds ``d`` directly on the basis ``xi^I`` of alternating forms and takes
    exact ranks with sympy.
    """
    r = len(c)
    bases = [list(itertools.combinations(range(r), k)) for k in range(r + 1)]
    ranks = []
    for k in range(r + 1):
        if k == r:
            ranks.append(0)
            continue
        src, dst = bases[k], bases[k + 1]
        M = sympy.zeros(len(dst), len(src))
        col = {I: n for n, I in enumerate(src)}
        for row, J in enumerate(dst):
            # (d alpha)(e_J) = sum_{a<b} (-1)^{a+b} alpha([e_Ja, e_Jb], e_J without a, b)
            for a, b in itertools.combinations(range(k + 1), 2):
                rest = [J[m] for m in range(k + 1) if m not in (a, b)]
                for m in range(r):
                    cm = c[J[a]][J[b]][m]
                    if not cm:
                        continue
                    args = [m] + rest
                    if len(set(args)) < len(args):
                        continue
                    perm = sorted(range(len(args)), key=lambda t: args[t])
                    sign = _perm_sign(perm)
                    I = tuple(sorted(args))
                    M[row, col[I]] += sympy.Rational(cm) * (-1) ** (a + b) * sign
        ranks.append(M.rank())
    dims = [len(b) for b in bases]
    return [dims[k] - ranks[k] - (ranks[k - 1] if k else 0) for k in range(r + 1)]


def _perm_sign(perm):
    sign, seen = 1, set()
    for s in range(len(perm)):
        if s in seen:
            continue
        j, length = s, 0
        while j not in seen:
            seen.add(j)
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def ahat_taylor(n_terms):
    """Coefficients of x^{2j} in (x/2)/sinh(x/2), j < n_terms, as sympy Rationals."""
    x = sympy.symbols("x")
    ser = sympy.series((x / 2) / sympy.sinh(x / 2), x, 0, 2 * n_terms).removeO()
    return [sympy.Rational(ser.coeff(x, 2 * j)) for j in range(n_terms)]


def matrix_rank(M):
    return sympy.Matrix(M).rank()


def random_idempotent(n, rank, rng):
    """Rational idempotent ``L D L^-1`` with ``D = diag(1,..,1,0,..,0)`` and ``L`` unit lower triangular."""
    L = [[Fraction(int(rng.integers(-2, 3))) if i > j else Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    D = [[Fraction(int(i == j and i < rank)) for j in range(n)] for i in range(n)]
    Linv = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            Linv[i][j] = -sum(L[i][k] * Linv[k][j] for k in range(j, i))
    return _mm(_mm(L, D), Linv)


def _mm(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))] for i in range(len(A))]
