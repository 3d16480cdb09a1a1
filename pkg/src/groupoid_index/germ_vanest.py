"""Germs of groupoid cochains at the unit space and the van Est map.

Local model: an arrow is ``(x, v)`` with ``v`` in the fiber of A, ``s = x`` and
``t = x . e^v``, where functions pull back along the target by the Lie series
``f(x . e^v) = (exp(rho(v)) f)(x)``. Composition is
``(x, v)(x . e^v, w) = (x, BCH(v, w))``. For an abelian algebroid with
``rho = id`` this is the pair groupoid ``x -> x + v``.

A germ of degree k is a polynomial in the base variables and slot variables
``v{j}_{i}`` (slot j = 1..k, component i = 1..r). All slot arithmetic is taken
modulo total slot degree ``> cap``; every operation here preserves that
filtration, so identities such as ``d o d = 0`` hold exactly modulo the cap.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

from .algebroid import AlgebroidForm, AlgebroidPresentation, StructureError, check_structure, embed, perm_sign_sort
from .scalars import POLY, Poly, PolyRing


class CapOverflowError(ValueError):
    """Requested germ degree does not fit the model."""


# ---------------------------------------------------------------------------
# Dynkin's form of the Baker--Campbell--Hausdorff series


@lru_cache(maxsize=None)
def bch_words(cap: int) -> tuple:
    """BCH terms up to degree ``cap`` as ``(coefficient, word)``; word letters 0 = X, 1 = Y.

    The word ``w_1 ... w_m`` stands for the right-nested bracket
    ``[w_1, [w_2, ..., [w_{m-1}, w_m]]]``.
    """
    terms: dict = {}

    def blocks(total):
        # sequences of (r_i, s_i) with r_i + s_i > 0 and sum <= total
        if total == 0:
            yield ()
            return
        for r in range(total + 1):
            for s in range(total + 1 - r):
                if r + s == 0:
                    continue
                for rest in blocks(total - r - s):
                    yield ((r, s),) + rest

    for seq in itertools.chain.from_iterable(blocks(d) for d in range(1, cap + 1)):
        n = len(seq)
        deg = sum(r + s for r, s in seq)
        word = tuple(l for r, s in seq for l in [0] * r + [1] * s)
        if deg > 1 and word[-1] == word[-2]:
            continue
        coef = Fraction((-1) ** (n - 1), n)
        den = deg
        for r, s in seq:
            den *= factorial(r) * factorial(s)
        coef /= den
        terms[word] = terms.get(word, Fraction(0)) + coef
    return tuple((c, w) for w, c in sorted(terms.items(), key=lambda t: (len(t[0]), t[0])) if c)


# ---------------------------------------------------------------------------
# model


class LocalGroupoidModel:
    """Exponential-coordinate model of a local groupoid integrating ``A``.

    ``A`` must have constant structure functions. ``max_degree`` bounds the
    number of slot blocks available.
    """

    def __init__(self, A: AlgebroidPresentation, cap: int = 5, max_degree: int = 4):
        if check_structure(A):
            raise StructureError("algebroid fails its structure check")
        for plane in A.structure:
            for row in plane:
                for c in row:
                    if not c.is_constant():
                        raise StructureError("local model needs constant structure functions")
        self.A = A
        self.r = A.rank
        self.cap = cap
        self.max_degree = max_degree
        base = A.ring
        names = list(base.names)
        kinds = list(base.kinds)
        for j in range(1, max_degree + 1):
            for i in range(1, self.r + 1):
                names.append(f"v{j}_{i}")
                kinds.append(POLY)
        self.ring = PolyRing(tuple(names), tuple(kinds), None, base.cutoff, None, base.field)
        self.nb = base.nvars
        self.c = [[[A.c(i, j, k).constant_term() for k in range(self.r)] for j in range(self.r)] for i in range(self.r)]
        self.anchor = [[embed(p, self.ring) for p in row] for row in A.anchor]
        self._slot_pos = set(range(self.nb, self.ring.nvars))

    @property
    def kind(self) -> str:
        abelian = all(not self.c[i][j][k] for i in range(self.r) for j in range(self.r) for k in range(self.r))
        return "pair" if abelian else "action"

    # -- variables
    def slot_index(self, j: int, i: int) -> int:
        """Ring position of component i (0-based) of slot j (1-based)."""
        if not 1 <= j <= self.max_degree:
            raise CapOverflowError(f"slot {j} exceeds model max_degree {self.max_degree}")
        return self.nb + (j - 1) * self.r + i

    def slot(self, j: int) -> list:
        return [self.ring.mode(_unit_exp(self.ring.nvars, self.slot_index(j, i))) for i in range(self.r)]

    def base_gen(self, a: int) -> Poly:
        return self.ring.gen(self.ring.names[a])

    # -- truncation
    def slot_degree(self, e) -> int:
        return sum(e[p] for p in range(self.nb, len(e)))

    def trunc(self, p: Poly) -> Poly:
        nb, cap = self.nb, self.cap
        return Poly(self.ring, {e: c for e, c in p.terms.items() if sum(e[nb:]) <= cap}, p.truncated, _raw=True)

    def mul(self, a: Poly, b: Poly) -> Poly:
        nb, cap = self.nb, self.cap
        out: dict = {}
        for e1, c1 in a.terms.items():
            d1 = sum(e1[nb:])
            for e2, c2 in b.terms.items():
                if d1 + sum(e2[nb:]) > cap:
                    continue
                e = tuple(x + y for x, y in zip(e1, e2))
                if not self.ring.keep(e)[0]:
                    continue
                v = out.get(e)
                out[e] = c1 * c2 if v is None else v + c1 * c2
        return Poly(self.ring, {e: c for e, c in out.items() if c}, a.truncated or b.truncated, _raw=True)

    def substitute(self, p: Poly, images: dict) -> Poly:
        """Replace ring variables (by position) with polynomials, modulo the cap."""
        if not images:
            return p
        pos = sorted(images)
        powers = {q: [self.ring.one()] for q in pos}
        out = self.ring.zero()
        for e, c in p.terms.items():
            term = Poly(self.ring, {tuple(0 if q in images else x for q, x in enumerate(e)): c}, _raw=True)
            for q in pos:
                k = e[q]
                if not k:
                    continue
                pw = powers[q]
                while len(pw) <= k:
                    pw.append(self.mul(pw[-1], images[q]))
                term = self.mul(term, pw[k])
                if not term:
                    break
            out = out + term
        return out

    # -- Lie algebra operations on slot vectors
    def bracket(self, u: list, w: list) -> list:
        out = [self.ring.zero() for _ in range(self.r)]
        for i in range(self.r):
            if not u[i]:
                continue
            for j in range(self.r):
                if not w[j]:
                    continue
                uw = None
                for k in range(self.r):
                    ck = self.c[i][j][k]
                    if ck:
                        uw = self.mul(u[i], w[j]) if uw is None else uw
                        out[k] = out[k] + uw * ck
        return out

    def bch(self, u: list, w: list) -> list:
        """``log(e^u e^w)`` modulo the cap."""
        if self.kind == "pair":
            return [a + b for a, b in zip(u, w)]
        out = [self.ring.zero() for _ in range(self.r)]
        letters = (u, w)
        for coef, word in bch_words(self.cap):
            vec = letters[word[-1]]
            for l in reversed(word[:-1]):
                vec = self.bracket(letters[l], vec)
            out = [o + x * coef for o, x in zip(out, vec)]
        return out

    def rho_apply(self, v: list, f: Poly) -> Poly:
        """``rho(v) f`` with v a slot vector; derivatives act on base variables only."""
        out = self.ring.zero()
        for i in range(self.r):
            if not v[i]:
                continue
            for a in range(self.nb):
                comp = self.anchor[i][a]
                if not comp:
                    continue
                df = f.diff(a)
                if df:
                    out = out + self.mul(self.mul(v[i], comp), df)
        return out

    def shift_base(self, f: Poly, v: list) -> Poly:
        """``f(x . e^v) = sum_m rho(v)^m f / m!`` modulo the cap."""
        out = f
        term = f
        for m in range(1, self.cap + 1):
            term = self.rho_apply(v, term) * Fraction(1, m)
            if not term:
                break
            out = out + term
        return self.trunc(out)


def _unit_exp(n, i):
    e = [0] * n
    e[i] = 1
    return tuple(e)


@dataclass
class GermCochain:
    """Degree-k germ: polynomial in base variables and slots 1..k of ``model.ring``."""

    model: LocalGroupoidModel
    degree: int
    poly: Poly

    def __post_init__(self):
        m = self.model
        if self.degree > m.max_degree:
            raise CapOverflowError(f"degree {self.degree} exceeds model max_degree {m.max_degree}")
        used = m.nb + self.degree * m.r
        for e in self.poly.terms:
            if any(e[p] for p in range(used, m.ring.nvars)):
                raise CapOverflowError("germ depends on slots beyond its degree")
        self.poly = m.trunc(self.poly)

    def __add__(self, other):
        return GermCochain(self.model, self.degree, self.poly + other.poly)

    def __sub__(self, other):
        return GermCochain(self.model, self.degree, self.poly - other.poly)

    def scale(self, c):
        return GermCochain(self.model, self.degree, self.poly * c)

    def is_zero(self, tol=None) -> bool:
        return self.poly.is_zero(tol)


def _relabel(model: LocalGroupoidModel, p: Poly, mapping: dict) -> Poly:
    """Move slot blocks: ``mapping[j_old] = j_new`` (pure variable renaming)."""
    perm = {}
    for jo, jn in mapping.items():
        for i in range(model.r):
            perm[model.slot_index(jo, i)] = model.slot_index(jn, i)
    out = {}
    for e, c in p.terms.items():
        e2 = list(e)
        for q in perm:
            e2[q] = 0
        for q, q2 in perm.items():
            e2[q2] += e[q]
        out[tuple(e2)] = c
    return Poly(model.ring, out, p.truncated)


def germ_diff(phi: GermCochain) -> GermCochain:
    """Coboundary of a germ in the local model (``d f = s*f - t*f`` in degree 0)."""
    m, k = phi.model, phi.degree
    if k + 1 > m.max_degree:
        raise CapOverflowError(f"degree {k + 1} exceeds model max_degree {m.max_degree}")
    if k + 1 > m.cap:
        raise CapOverflowError(f"cap {m.cap} admits no degree-{k + 1} multilinear terms")
    p = phi.poly
    v1 = m.slot(1)
    if k == 0:
        return GermCochain(m, 1, p - m.shift_base(p, v1))
    # d_0: drop g_1, base point moves to t(g_1)
    first = m.shift_base(_relabel(m, p, {j: j + 1 for j in range(1, k + 1)}), v1)
    acc = first
    for i in range(1, k + 1):
        images = {}
        merged = m.bch(m.slot(i), m.slot(i + 1))
        for c in range(m.r):
            images[m.slot_index(i, c)] = merged[c]
        shifted = _relabel(m, p, {j: j + 1 for j in range(i + 1, k + 1)})
        # after relabel, slot i+1 of shifted is empty; substitute slot i by the merged vector
        term = m.substitute(shifted, images)
        acc = acc + term * (-1) ** i
    acc = acc + p * (-1) ** (k + 1)
    return GermCochain(m, k + 1, m.trunc(acc))


def van_est_R(X: list, phi: GermCochain) -> GermCochain:
    """Derivative in the first slot along the t-fiber through the unit.

    A is identified with ``ker ds`` at the units (anchor ``dt``); the t-fiber
    curve is the inverse of the s-fiber curve ``(x', eps X)``, namely
    ``g_1(eps) = (x' . e^{eps X}, -eps X)`` with ``t(g_1) = x'``. The result is
    ``d/deps phi(g_1(eps), g_2, ...)`` at ``eps = 0``, i.e.
    ``rho(X) phi - sum_i X^i d/dv1_i phi`` at ``v_1 = 0``, slots renumbered down.
    ``X`` lists base-ring coefficients of a section in the frame.
    """
    m, k = phi.model, phi.degree
    if k < 1:
        raise CapOverflowError("R_X needs degree >= 1")
    ring = m.ring
    Xg = [embed(x, ring) if isinstance(x, Poly) else ring.const(x) for x in X]
    zero_slot1 = {m.slot_index(1, i): ring.zero() for i in range(m.r)}
    out = ring.zero()
    for i in range(m.r):
        if not Xg[i]:
            continue
        d = phi.poly.diff(m.slot_index(1, i))
        out = out - m.mul(Xg[i], m.substitute(d, zero_slot1))
    at0 = m.substitute(phi.poly, zero_slot1)
    for i in range(m.r):
        if not Xg[i]:
            continue
        for a in range(m.nb):
            comp = m.anchor[i][a]
            if comp:
                out = out + m.mul(m.mul(Xg[i], comp), at0.diff(a))
    out = _relabel(m, out, {j: j - 1 for j in range(2, k + 1)})
    return GermCochain(m, k - 1, m.trunc(out))


def van_est_phi(phi: GermCochain) -> AlgebroidForm:
    """``Phi(phi)(e_J) = sum_sigma sgn(sigma) R_{X_sigma(1)} ... R_{X_sigma(k)} phi`` on frame sections."""
    m, k = phi.model, phi.degree
    comps = {}
    basis = [[1 if a == i else 0 for a in range(m.r)] for i in range(m.r)]
    for J in itertools.combinations(range(m.r), k):
        acc = m.ring.zero()
        for perm in itertools.permutations(range(k)):
            s, _ = perm_sign_sort(perm)
            cur = phi
            for pos in reversed(perm):
                cur = van_est_R(basis[J[pos]], cur)
            acc = acc + cur.poly * s
        if acc:
            comps[J] = _to_base(m, acc)
    return AlgebroidForm(k, comps, m.A.ring)


def _to_base(m: LocalGroupoidModel, p: Poly) -> Poly:
    out = {}
    for e, c in p.terms.items():
        if any(e[m.nb:]):
            raise CapOverflowError("slot variables survive in a degree-0 germ")
        out[e[: m.nb]] = c
    return Poly(m.A.ring, out, p.truncated)


def germ_from_form(m: LocalGroupoidModel, alpha: AlgebroidForm) -> GermCochain:
    """Multilinear antisymmetric slot polynomial ``phi`` with ``Phi(phi) = alpha``."""
    k = alpha.degree
    acc = m.ring.zero()
    for J, coef in alpha.comps.items():
        c = embed(coef, m.ring)
        for perm in itertools.permutations(range(k)):
            s, _ = perm_sign_sort(perm)
            mono = c
            for slot, pos in enumerate(perm, start=1):
                mono = m.mul(mono, m.slot(slot)[J[pos]])
            acc = acc + mono * s
    g = GermCochain(m, k, acc)
    if k == 0:
        return g
    # Phi of the antisymmetrized monomial is a universal multiple of alpha
    img = van_est_phi(g)
    for J, coef in alpha.comps.items():
        ratio = _ratio(img[J], coef)
        return g.scale(1 / ratio)
    return g


def _ratio(p: Poly, q: Poly):
    e, c = next(iter(q.terms.items()))
    return p.terms[e] / c


def random_germ(m: LocalGroupoidModel, k: int, rng, n_terms: int = 6, coeff_range: int = 3) -> GermCochain:
    """Random germ of degree k with small integer coefficients."""
    ring = m.ring
    used = list(range(m.nb + k * m.r))
    out = {}
    for _ in range(n_terms):
        e = [0] * ring.nvars
        budget = int(rng.integers(0, m.cap + 1))
        for _ in range(budget):
            q = used[int(rng.integers(0, len(used)))] if used else None
            if q is None:
                break
            if q < m.nb and ring.kinds[q] != POLY:
                e[q] = int(rng.integers(-min(2, ring.cutoff or 0), min(2, ring.cutoff or 0) + 1))
            else:
                e[q] += 1
        c = int(rng.integers(-coeff_range, coeff_range + 1))
        if c:
            out[tuple(e)] = out.get(tuple(e), 0) + c
    return GermCochain(m, k, m.trunc(Poly(ring, out)))


def germ_to_global(m: LocalGroupoidModel, phi: GermCochain):
    """Callable ``(x, [v_1..v_k]) -> value`` evaluating the germ numerically."""
    def f(x, vs):
        point = list(x) + [0.0] * (m.ring.nvars - m.nb)
        for j, v in enumerate(vs, start=1):
            for i in range(m.r):
                point[m.slot_index(j, i)] = v[i]
        return phi.poly.evaluate(point)
    return f
