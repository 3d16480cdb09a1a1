"""Lie algebroid presentations, the Chevalley--Eilenberg complex and pull-backs.

An algebroid of rank ``r`` over a base ring (point, chart or torus) is given by
its anchor components ``rho^a_i`` and structure functions ``c^k_ij`` in a local
frame ``e_1, ..., e_r``::

    [e_i, e_j] = sum_k c^k_ij e_k,      rho(e_i) = sum_a rho^a_i d/dx_a

The CE differential uses the standard signs (0-based positions)::

    (d alpha)(X_0..X_k) = sum_p (-1)^p rho(X_p) alpha(..^X_p..)
                        + sum_{p<q} (-1)^(p+q) alpha([X_p, X_q], ..^X_p..^X_q..)
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

from .scalars import EXACT, FOURIER, POLY, Cx, Poly, PolyRing, chart_ring, torus_ring


class StructureError(ValueError):
    """Malformed algebroid data."""


class ComplexTooLargeError(ValueError):
    """Truncated CE complex exceeds the configured size cap."""


# ---------------------------------------------------------------------------
# presentations


@dataclass
class AlgebroidPresentation:
    """Rank-r Lie algebroid in a frame.

    Attributes:
        ring: base ring (no variables for a point base).
        rank: r.
        anchor: ``anchor[i][a]`` is rho^a_i, the a-th component of rho(e_i).
        structure: ``structure[i][j][k]`` is c^k_ij.
        name: label used in reports.
        base: ``"point"``, ``"chart"`` or ``"torus"``.
    """

    ring: PolyRing
    rank: int
    anchor: list
    structure: list
    name: str = ""
    base: str = "point"

    @property
    def base_vars(self) -> tuple:
        return self.ring.names

    @property
    def field(self):
        return self.ring.field

    def c(self, i, j, k) -> Poly:
        return self.structure[i][j][k]

    def rho(self, i: int, f: Poly) -> Poly:
        """Apply the vector field rho(e_i) to a base function."""
        out = self.ring.zero()
        for a, comp in enumerate(self.anchor[i]):
            if comp:
                out = out + comp * f.diff(a)
        return out

    def bracket_vec(self, u: list, v: list) -> list:
        """Bracket of sections given by coefficient lists in the frame."""
        r = self.rank
        out = [self.ring.zero() for _ in range(r)]
        for i in range(r):
            if not u[i]:
                continue
            for j in range(r):
                if not v[j]:
                    continue
                uv = u[i] * v[j]
                for k in range(r):
                    ck = self.structure[i][j][k]
                    if ck:
                        out[k] = out[k] + uv * ck
        for i in range(r):
            if u[i]:
                for k in range(r):
                    if v[k]:
                        out[k] = out[k] + u[i] * self.rho(i, v[k])
        for j in range(r):
            if v[j]:
                for k in range(r):
                    if u[k]:
                        out[k] = out[k] - v[j] * self.rho(j, u[k])
        return out


def lie_algebra(structure_constants, name: str = "", field=EXACT) -> AlgebroidPresentation:
    """Lie algebra over a point from ``{(i, j): {k: c}}`` (only i<j needed) or a dense array."""
    ring = PolyRing((), (), field=field)
    if isinstance(structure_constants, dict):
        keys = structure_constants.keys()
        r = 1 + max(max(i, j, *structure_constants[(i, j)].keys()) for i, j in keys) if keys else 0
        dense = [[[0] * r for _ in range(r)] for _ in range(r)]
        for (i, j), d in structure_constants.items():
            for k, v in d.items():
                dense[i][j][k] = v
                dense[j][i][k] = -v
    else:
        dense = structure_constants
        r = len(dense)
    C = [[[ring.const(dense[i][j][k]) for k in range(r)] for j in range(r)] for i in range(r)]
    return AlgebroidPresentation(ring, r, [[] for _ in range(r)], C, name, "point")


def abelian(rank: int, field=EXACT) -> AlgebroidPresentation:
    return lie_algebra([[[0] * rank for _ in range(rank)] for _ in range(rank)], f"abelian{rank}", field)


def su2(field=EXACT) -> AlgebroidPresentation:
    """su(2) with c^k_ij = epsilon_ijk."""
    eps = [[[0] * 3 for _ in range(3)] for _ in range(3)]
    for (i, j, k), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (1, 0, 2): -1, (2, 1, 0): -1, (0, 2, 1): -1}.items():
        eps[i][j][k] = s
    return lie_algebra(eps, "su2", field)


def heisenberg(field=EXACT) -> AlgebroidPresentation:
    """h_3: [e1, e2] = e3."""
    return lie_algebra({(0, 1): {2: 1}}, "h3", field)


def affine(field=EXACT) -> AlgebroidPresentation:
    """ax+b algebra: [e1, e2] = e2."""
    return lie_algebra({(0, 1): {1: 1}}, "affine", field)


def tangent_torus(n: int = 1, cutoff: int = 4, field=EXACT) -> AlgebroidPresentation:
    """Tangent algebroid T(T^n) in the frame d/dtheta_a."""
    ring = torus_ring(n, cutoff, prefix="t", field=field)
    anchor = [[ring.const(1 if a == i else 0) for a in range(n)] for i in range(n)]
    C = [[[ring.zero() for _ in range(n)] for _ in range(n)] for _ in range(n)]
    return AlgebroidPresentation(ring, n, anchor, C, f"T(T^{n})", "torus")


def tangent_chart(n: int = 1, degree_cap: int | None = None, field=EXACT) -> AlgebroidPresentation:
    """Tangent algebroid T(R^n) in the coordinate frame."""
    ring = chart_ring(n, degree_cap, prefix="x", field=field)
    anchor = [[ring.const(1 if a == i else 0) for a in range(n)] for i in range(n)]
    C = [[[ring.zero() for _ in range(n)] for _ in range(n)] for _ in range(n)]
    return AlgebroidPresentation(ring, n, anchor, C, f"T(R^{n})", "chart")


def from_data(ring: PolyRing, anchor, structure, name="", base=None) -> AlgebroidPresentation:
    r = len(structure)
    if len(anchor) != r:
        raise StructureError("anchor and structure ranks differ")
    co = lambda v: v if isinstance(v, Poly) else ring.const(v)
    A = [[co(v) for v in row] for row in anchor]
    C = [[[co(structure[i][j][k]) for k in range(r)] for j in range(r)] for i in range(r)]
    if base is None:
        kinds = set(ring.kinds)
        base = "point" if not ring.names else ("torus" if kinds == {FOURIER} else "chart")
    return AlgebroidPresentation(ring, r, A, C, name, base)


# ---------------------------------------------------------------------------
# structure check


def _nonzero(p: Poly, tol: float | None) -> bool:
    if p.ring.field.exact:
        return bool(p)
    return not p.is_zero(tol)


def check_structure(A: AlgebroidPresentation, tol: float | None = None) -> list:
    """Diagnostics for antisymmetry, anchor compatibility and Jacobi; empty iff all hold."""
    r, out = A.rank, []
    n = A.ring.nvars
    for i in range(r):
        for j in range(r):
            for k in range(r):
                s = A.c(i, j, k) + A.c(j, i, k)
                if _nonzero(s, tol):
                    out.append({"identity": "antisymmetry", "indices": (i, j, k), "residual": s})
    # rho([e_i, e_j]) = [rho e_i, rho e_j]
    for i in range(r):
        for j in range(i + 1, r):
            for a in range(n):
                lhs = A.ring.zero()
                for k in range(r):
                    if A.anchor[k]:
                        lhs = lhs + A.c(i, j, k) * A.anchor[k][a]
                rhs = A.rho(i, A.anchor[j][a]) - A.rho(j, A.anchor[i][a]) if A.anchor[i] else A.ring.zero()
                res = lhs - rhs
                if _nonzero(res, tol):
                    out.append({"identity": "anchor", "indices": (i, j, a), "residual": res})
    # Jacobi on basis triples
    basis = [[A.ring.const(1 if m == i else 0) for m in range(r)] for i in range(r)]
    for i, j, k in itertools.combinations(range(r), 3):
        tot = [A.ring.zero() for _ in range(r)]
        for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
            inner = A.bracket_vec(basis[a], basis[b])
            outer = A.bracket_vec(inner, basis[c])
            tot = [x + y for x, y in zip(tot, outer)]
        for l, t in enumerate(tot):
            if _nonzero(t, tol):
                out.append({"identity": "jacobi", "indices": (i, j, k, l), "residual": t})
    return out


# ---------------------------------------------------------------------------
# forms


def perm_sign_sort(seq) -> tuple[int, tuple]:
    """Sign of the permutation sorting ``seq`` and the sorted tuple (0 sign on repeats)."""
    seq = list(seq)
    if len(set(seq)) < len(seq):
        return 0, ()
    sign = 1
    arr = seq[:]
    for i in range(len(arr)):
        for j in range(len(arr) - 1 - i):
            if arr[j] > arr[j + 1]:
                arr[j], arr[j + 1] = arr[j + 1], arr[j]
                sign = -sign
    return sign, tuple(arr)


class AlgebroidForm:
    """k-form on an algebroid: strictly increasing multi-index -> coefficient.

    Coefficients are :class:`Poly` elements of the base ring, or square matrices
    of them (lists of lists) for End(E)-valued forms.
    """

    __slots__ = ("degree", "comps", "ring", "matrix_size")

    def __init__(self, degree: int, comps: dict, ring: PolyRing, matrix_size: int | None = None):
        self.degree = degree
        self.ring = ring
        self.matrix_size = matrix_size
        clean = {}
        for key, v in comps.items():
            key = tuple(key)
            if len(key) != degree or any(key[i] >= key[i + 1] for i in range(len(key) - 1)):
                raise StructureError(f"form key {key} is not strictly increasing of length {degree}")
            if not _coef_zero(v):
                clean[key] = v
        self.comps = clean

    def __getitem__(self, key):
        key = tuple(key)
        v = self.comps.get(key)
        if v is None:
            return _coef_zero_like(self)
        return v

    def value(self, idx) -> object:
        """Coefficient on an arbitrary (unsorted) index tuple, with sign."""
        s, key = perm_sign_sort(idx)
        if s == 0:
            return _coef_zero_like(self)
        return _coef_scale(self[key], s)

    def __add__(self, other):
        if other.degree != self.degree:
            raise StructureError("degree mismatch in form addition")
        keys = set(self.comps) | set(other.comps)
        return AlgebroidForm(self.degree, {k: _coef_add(self[k], other[k]) for k in keys}, self.ring, self.matrix_size)

    def __neg__(self):
        return AlgebroidForm(self.degree, {k: _coef_scale(v, -1) for k, v in self.comps.items()}, self.ring, self.matrix_size)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return AlgebroidForm(self.degree, {k: _coef_scale(v, c) for k, v in self.comps.items()}, self.ring, self.matrix_size)

    def is_zero(self, tol: float | None = None) -> bool:
        if self.ring.field.exact:
            return not self.comps
        return all(_coef_small(v, tol) for v in self.comps.values())

    def __eq__(self, other):
        if not isinstance(other, AlgebroidForm):
            return NotImplemented
        return self.degree == other.degree and (self - other).is_zero()

    def __repr__(self):
        return f"AlgebroidForm(deg={self.degree}, {self.comps})"


def _coef_zero(v) -> bool:
    if isinstance(v, Poly):
        return not v
    if isinstance(v, list):
        return all(not x for row in v for x in row)
    return not v


def _coef_small(v, tol) -> bool:
    if isinstance(v, Poly):
        return v.is_zero(tol)
    return all(x.is_zero(tol) for row in v for x in row)


def _coef_zero_like(form: AlgebroidForm):
    if form.matrix_size:
        m = form.matrix_size
        return [[form.ring.zero() for _ in range(m)] for _ in range(m)]
    return form.ring.zero()


def _coef_add(a, b):
    if isinstance(a, list):
        return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
    return a + b


def _coef_scale(a, c):
    if isinstance(a, list):
        return [[x * c for x in row] for row in a]
    return a * c


def _coef_mul(a, b):
    """Product of coefficients (matrix product for matrix-valued ones)."""
    if isinstance(a, list) and isinstance(b, list):
        m = len(a)
        return [[sum((a[i][k] * b[k][j] for k in range(m)), a[0][0] * 0) for j in range(m)] for i in range(m)]
    if isinstance(a, list):
        return [[x * b for x in row] for row in a]
    if isinstance(b, list):
        return [[a * x for x in row] for row in b]
    return a * b


def _coef_apply(fn, a):
    if isinstance(a, list):
        return [[fn(x) for x in row] for row in a]
    return fn(a)


def zero_form(A: AlgebroidPresentation, degree: int, matrix_size=None) -> AlgebroidForm:
    return AlgebroidForm(degree, {}, A.ring, matrix_size)


def function_form(A: AlgebroidPresentation, f) -> AlgebroidForm:
    if not isinstance(f, (Poly, list)):
        f = A.ring.const(f)
    ms = len(f) if isinstance(f, list) else None
    return AlgebroidForm(0, {(): f}, A.ring, ms)


def dual_basis_form(A: AlgebroidPresentation, i: int) -> AlgebroidForm:
    return AlgebroidForm(1, {(i,): A.ring.one()}, A.ring)


def wedge(a: AlgebroidForm, b: AlgebroidForm) -> AlgebroidForm:
    """Wedge product (order-sensitive for matrix-valued coefficients)."""
    ms = a.matrix_size or b.matrix_size
    out: dict = {}
    for I, x in a.comps.items():
        for J, y in b.comps.items():
            s, key = perm_sign_sort(I + J)
            if s == 0:
                continue
            v = _coef_scale(_coef_mul(x, y), s)
            out[key] = _coef_add(out[key], v) if key in out else v
    return AlgebroidForm(a.degree + b.degree, out, a.ring, ms)


def ce_differential(A: AlgebroidPresentation, alpha: AlgebroidForm) -> AlgebroidForm:
    """Chevalley--Eilenberg differential with standard signs."""
    k, r = alpha.degree, A.rank
    if k >= r + 1:
        raise StructureError(f"degree {k} form exceeds rank {r}")
    if k == r:
        return AlgebroidForm(k + 1, {}, A.ring, alpha.matrix_size)
    out: dict = {}
    for J in itertools.combinations(range(r), k + 1):
        acc = None
        for p, jp in enumerate(J):
            rest = J[:p] + J[p + 1:]
            coef = alpha[rest]
            if _coef_zero(coef):
                continue
            term = _coef_apply(lambda f, jp=jp: A.rho(jp, f), coef) if A.anchor[jp] else None
            if term is not None:
                term = _coef_scale(term, (-1) ** p)
                acc = term if acc is None else _coef_add(acc, term)
        for p in range(k + 1):
            for q in range(p + 1, k + 1):
                rest = tuple(J[m] for m in range(k + 1) if m not in (p, q))
                for m in range(r):
                    c = A.c(J[p], J[q], m)
                    if not c:
                        continue
                    val = alpha.value((m,) + rest)
                    if _coef_zero(val):
                        continue
                    term = _coef_scale(_coef_mul(c, val) if not isinstance(val, list) else _coef_apply(lambda f: c * f, val), (-1) ** (p + q))
                    acc = term if acc is None else _coef_add(acc, term)
        if acc is not None:
            out[J] = acc
    return AlgebroidForm(k + 1, out, A.ring, alpha.matrix_size)


def evaluate_form(alpha: AlgebroidForm, sections: list) -> object:
    """alpha(X_1, ..., X_k) for sections given as coefficient lists."""
    k = alpha.degree
    total = None
    for J, coef in alpha.comps.items():
        # sum over permutations assigning J to argument slots
        for perm in itertools.permutations(range(k)):
            s, _ = perm_sign_sort(perm)
            prod = None
            for slot, jpos in enumerate(perm):
                x = sections[slot][J[jpos]]
                prod = x if prod is None else prod * x
            if prod is None:
                prod = alpha.ring.one()
            term = _coef_mul(coef, prod * s) if not isinstance(coef, list) else _coef_apply(lambda f: f * prod * s, coef)
            total = term if total is None else _coef_add(total, term)
    if total is None:
        return _coef_zero_like(alpha)
    return total


# ---------------------------------------------------------------------------
# exact rank


def _gauss_int_rows(M):
    """Scale each row of a Cx matrix so that all entries are Gaussian integers."""
    from math import lcm

    out = []
    for row in M:
        den = 1
        for v in row:
            den = lcm(den, v.re.denominator, v.im.denominator)
        out.append([v * den for v in row])
    return out


def rank_exact(M) -> int:
    """Rank of a matrix of :class:`Cx` entries by fraction-free (Bareiss) elimination.

    Rows are first scaled to Gaussian integers; every Bareiss division is then
    exact in Z[i].
    """
    if not M or not M[0]:
        return 0
    A = [[Cx.coerce(v) for v in row] for row in _gauss_int_rows([[Cx.coerce(v) for v in r] for r in M])]
    nrows, ncols = len(A), len(A[0])
    rank, prev = 0, Cx(1)
    col = 0
    while rank < nrows and col < ncols:
        piv = next((i for i in range(rank, nrows) if A[i][col]), None)
        if piv is None:
            col += 1
            continue
        A[rank], A[piv] = A[piv], A[rank]
        p = A[rank][col]
        for i in range(rank + 1, nrows):
            aic = A[i][col]
            rowi, rowr = A[i], A[rank]
            for j in range(col + 1, ncols):
                rowi[j] = (p * rowi[j] - aic * rowr[j]) / prev
            rowi[col] = Cx(0)
        prev = p
        rank += 1
        col += 1
    return rank


def rank_float(M, tol: float = 1e-9) -> int:
    import numpy as np

    if not len(M) or not len(M[0]):
        return 0
    a = np.array([[complex(v) for v in row] for row in M])
    s = np.linalg.svd(a, compute_uv=False)
    if not len(s):
        return 0
    return int(np.sum(s > tol * max(1.0, s[0])))


# ---------------------------------------------------------------------------
# cohomology


@dataclass
class CohomologyReport:
    """Per-degree kernel/image dimensions and Betti numbers of a truncated CE complex."""

    dims: list
    kernel: list
    image: list
    betti: list
    representatives: list = field(default_factory=list)
    truncation: dict = field(default_factory=dict)
    stable: list | None = None
    betti_next: list | None = None

    def as_dict(self) -> dict:
        return {
            "dims": self.dims,
            "kernel": self.kernel,
            "image": self.image,
            "betti": self.betti,
            "truncation": self.truncation,
            "stable": self.stable,
            "betti_next": self.betti_next,
        }


def _coefficient_basis(A: AlgebroidPresentation, cutoff: int | None, degree_cap: int | None) -> list:
    """Monomial exponents spanning the truncated base ring."""
    ring = A.ring
    if not ring.names:
        return [()]
    ranges = []
    for kind in ring.kinds:
        if kind == FOURIER:
            K = cutoff if cutoff is not None else ring.cutoff
            ranges.append(range(-K, K + 1))
        elif kind == POLY:
            D = degree_cap if degree_cap is not None else ring.degree_cap
            if D is None:
                raise StructureError("polynomial base needs a degree cap for cohomology")
            ranges.append(range(0, D + 1))
        else:
            raise StructureError("hbar variable in base ring")
    out = []
    pidx = [i for i, k in enumerate(ring.kinds) if k == POLY]
    D = degree_cap if degree_cap is not None else ring.degree_cap
    for e in itertools.product(*ranges):
        if pidx and sum(e[i] for i in pidx) > D:
            continue
        out.append(e)
    return out


def ce_matrix(A: AlgebroidPresentation, k: int, cutoff=None, degree_cap=None):
    """Matrix of d: Omega^k -> Omega^{k+1} on the truncated complex, plus bases."""
    r = A.rank
    mon = _coefficient_basis(A, cutoff, degree_cap)
    src = [(J, e) for J in itertools.combinations(range(r), k) for e in mon]
    tgt = [(J, e) for J in itertools.combinations(range(r), k + 1) for e in mon]
    tindex = {t: i for i, t in enumerate(tgt)}
    ring = A.ring
    if cutoff is not None and ring.cutoff != cutoff:
        ring = PolyRing(ring.names, ring.kinds, ring.degree_cap, cutoff, ring.hbar_order, ring.field)
        A = AlgebroidPresentation(
            ring,
            A.rank,
            [[Poly(ring, p.terms) for p in row] for row in A.anchor],
            [[[Poly(ring, p.terms) for p in row] for row in plane] for plane in A.structure],
            A.name,
            A.base,
        )
    zero = ring.field.zero()
    M = [[zero] * len(src) for _ in range(len(tgt))]
    for col, (J, e) in enumerate(src):
        if k + 1 > r:
            break
        form = AlgebroidForm(k, {J: ring.mode(e, 1)}, ring)
        d = ce_differential(A, form)
        for K, coef in d.comps.items():
            for e2, c in coef.terms.items():
                row = tindex.get((K, e2))
                if row is not None:
                    M[row][col] = c
    return M, src, tgt


def ce_cohomology(A: AlgebroidPresentation, cutoff: int | None = None, degree_cap: int | None = None,
                  max_size: int = 4000, stability: bool = True) -> CohomologyReport:
    """Betti numbers of the (truncated) CE complex.

    Exact mode ranks use Bareiss elimination; for a torus base the computation
    is repeated at ``cutoff + 2`` and unstable degrees are flagged.
    """
    r = A.rank
    exact = A.field.exact
    rank_fn = rank_exact if exact else rank_float
    mon = _coefficient_basis(A, cutoff, degree_cap)
    dims = [comb(r, k) * len(mon) for k in range(r + 1)]
    if max(dims) > max_size:
        raise ComplexTooLargeError(f"truncated complex of size {max(dims)} exceeds cap {max_size}")
    ranks = []
    reps = []
    for k in range(r + 1):
        if k == r:
            ranks.append(0)
            continue
        M, src, _ = ce_matrix(A, k, cutoff, degree_cap)
        ranks.append(rank_fn(M))
    kernel = [dims[k] - ranks[k] for k in range(r + 1)]
    image = [0] + ranks[:-1]
    betti = [kernel[k] - image[k] for k in range(r + 1)]
    trunc = {"cutoff": cutoff if cutoff is not None else A.ring.cutoff, "degree_cap": degree_cap if degree_cap is not None else A.ring.degree_cap}
    rep = CohomologyReport(dims, kernel, image, betti, reps, trunc)
    has_torus = FOURIER in A.ring.kinds
    if stability and has_torus:
        K = trunc["cutoff"]
        nxt = ce_cohomology(A, cutoff=K + 2, degree_cap=degree_cap, max_size=max_size, stability=False)
        rep.betti_next = nxt.betti
        rep.stable = [a == b for a, b in zip(betti, nxt.betti)]
    elif stability:
        rep.stable = [True] * (r + 1)
    return rep


# ---------------------------------------------------------------------------
# modular cocycle


def divergence(A: AlgebroidPresentation, i: int) -> Poly:
    """Lebesgue divergence of rho(e_i) in the base coordinates."""
    out = A.ring.zero()
    for a, comp in enumerate(A.anchor[i]):
        out = out + comp.diff(a)
    return out


def modular_cocycle(A: AlgebroidPresentation, density=1, log_density: Poly | None = None) -> AlgebroidForm:
    """Degree-1 modular cocycle of the trivialization ``Omega = f dx (x) e_1^...^e_r``.

    ``theta(e_j) = sum_i c^i_ij - div(rho e_j) - rho(e_j) log f``. Pass either a
    nonzero constant ``density`` or ``log_density = log f`` as a base-ring element.
    Changing ``Omega`` to ``e^eta Omega`` changes theta by ``-d eta``.
    """
    ring = A.ring
    if log_density is None:
        f = density if isinstance(density, Poly) else ring.const(density)
        if not f.is_constant():
            raise ValueError("nonconstant density: pass log_density instead")
        if not f.constant_term():
            raise ValueError("density vanishes (zero constant term)")
        log_density = ring.zero()
    comps = {}
    for j in range(A.rank):
        v = ring.zero()
        for i in range(A.rank):
            v = v + A.c(i, j, i)
        if A.anchor[j]:
            v = v - divergence(A, j) - A.rho(j, log_density)
        if v:
            comps[(j,)] = v
    return AlgebroidForm(1, comps, ring)


# ---------------------------------------------------------------------------
# pull-back algebroid over A*


@dataclass
class PullbackAlgebroid:
    """pi^! A over A* in the frame (lift(e_1..e_r), d/dxi_1..d/dxi_r).

    The lift of e_i is horizontal in the frame trivialization of A*, so
    ``[lift e_i, lift e_j] = c^k_ij lift e_k`` and verticals commute with
    everything. ``theta`` is minus the CE differential of the Liouville form
    ``lambda(lift e_i) = xi_i``, hence closed, with ``theta(lift e_i, d/dxi_j) = delta_ij``.
    """

    source: AlgebroidPresentation
    algebroid: AlgebroidPresentation
    theta: AlgebroidForm
    euler: list
    liouville: AlgebroidForm
    fiber_vars: tuple

    @property
    def r(self) -> int:
        return self.source.rank

    def lift(self, i: int) -> int:
        return i

    def vertical(self, j: int) -> int:
        return self.source.rank + j


def pullback_ring(A: AlgebroidPresentation, fiber_prefix: str = "xi", degree_cap: int | None = None) -> PolyRing:
    base = A.ring
    fib = tuple(f"{fiber_prefix}{i + 1}" for i in range(A.rank))
    cap = degree_cap if degree_cap is not None else base.degree_cap
    return PolyRing(base.names + fib, base.kinds + (POLY,) * A.rank, cap, base.cutoff, None, base.field)


def embed(p: Poly, ring: PolyRing) -> Poly:
    """Embed a base-ring element into a ring whose variables extend the base's."""
    idx = [ring.index(n) for n in p.ring.names]
    out = {}
    for e, c in p.terms.items():
        e2 = [0] * ring.nvars
        for i, v in zip(idx, e):
            e2[i] = v
        out[tuple(e2)] = c
    return Poly(ring, out)


def pullback_algebroid(A: AlgebroidPresentation, degree_cap: int | None = None) -> PullbackAlgebroid:
    """Construct pi^! A with its symplectic form and Euler section."""
    if check_structure(A):
        raise StructureError("source algebroid fails its structure check")
    r = A.rank
    ring = pullback_ring(A, degree_cap=degree_cap)
    nb = A.ring.nvars
    R2 = 2 * r
    zero = ring.zero()
    anchor = []
    for i in range(r):
        row = [embed(A.anchor[i][a], ring) if A.anchor[i] else zero for a in range(nb)] + [zero] * r
        anchor.append(row)
    for j in range(r):
        row = [zero] * nb + [ring.const(1 if m == j else 0) for m in range(r)]
        anchor.append(row)
    C = [[[zero for _ in range(R2)] for _ in range(R2)] for _ in range(R2)]
    for i in range(r):
        for j in range(r):
            for k in range(r):
                C[i][j][k] = embed(A.c(i, j, k), ring)
    P = AlgebroidPresentation(ring, R2, anchor, C, f"pi!{A.name}", "chart" if A.base == "point" else A.base)
    xi = [ring.gen(n) for n in ring.names[nb:]]
    liouville = AlgebroidForm(1, {(i,): xi[i] for i in range(r)}, ring)
    theta = -ce_differential(P, liouville)
    euler = [zero] * r + xi
    return PullbackAlgebroid(A, P, theta, euler, liouville, ring.names[nb:])


def theta_matrix(pb: PullbackAlgebroid) -> list:
    """Matrix Theta(X_a, X_b) of the symplectic form in the frame."""
    n = 2 * pb.r
    return [[pb.theta.value((a, b)) if a != b else pb.theta.ring.zero() for b in range(n)] for a in range(n)]
