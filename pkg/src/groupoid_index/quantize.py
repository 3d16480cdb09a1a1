"""Symbols on A*, star products, the homogeneity operator and the hbar-trace.

Convention: every product here satisfies ``a*b - b*a = -i hbar {a,b} + O(hbar^2)``
with the Lie-Poisson bracket ``{f, X} = -rho(X) f`` and ``{X, Y} = -[X, Y]``.

A symbol is a polynomial in base coordinates, fiber coordinates ``xi_i`` and
``hbar``, optionally times a Gaussian weight ``exp(-sum v^2 / (2 s))`` over a
fixed set of variables. Weighted symbols stand in for rapidly decaying ones.

The flat Fedosov construction lives at the end of the module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .algebroid import AlgebroidPresentation, embed
from .scalars import FOURIER, HBAR, POLY, Cx, HbarSeries, Poly, PolyRing, RingMismatchError


class SymbolError(ValueError):
    """Invalid symbol operation (weight mismatch, non-integrable input, ...)."""


class UnsupportedModelError(ValueError):
    """The requested star product is not implemented for this algebroid."""


class FedosovError(RuntimeError):
    """The Fedosov iteration left a non-central curvature term."""

    def __init__(self, msg, degree):
        super().__init__(msg)
        self.degree = degree


# ---------------------------------------------------------------------------
# symbol spaces


@dataclass(eq=False)
class SymbolSpace:
    """Coordinates of A* together with its Poisson data.

    ``poisson`` lists constant bivector entries ``(u, v, c)`` meaning
    ``{u, v} = c`` (both orders are stored). It is used when no algebroid is
    attached, e.g. for the Darboux plane.
    """

    ring: PolyRing
    base_names: tuple
    fiber_names: tuple
    A: AlgebroidPresentation | None = None
    poisson: tuple | None = None
    hbar: str = "hbar"

    @property
    def N(self) -> int:
        return self.ring.hbar_order

    @property
    def rank(self) -> int:
        return len(self.fiber_names)

    def gen(self, name: str) -> "SymbolSeries":
        return SymbolSeries(self, self.ring.gen(name))

    def xi(self, i: int) -> "SymbolSeries":
        return self.gen(self.fiber_names[i])

    def hbar_gen(self) -> "SymbolSeries":
        return self.gen(self.hbar)

    def const(self, c) -> "SymbolSeries":
        return SymbolSeries(self, self.ring.const(c))

    def base(self, f: Poly) -> "SymbolSeries":
        """Pull a base function back along the projection."""
        return SymbolSeries(self, embed(f, self.ring))

    def gaussian(self, names: Sequence[str] | None = None, s=1) -> "SymbolSeries":
        names = tuple(self.fiber_names if names is None else names)
        return SymbolSeries(self, self.ring.one(), Weight(names, Fraction(s)))

    def symbol(self, poly: Poly, weight: "Weight | None" = None) -> "SymbolSeries":
        return SymbolSeries(self, poly, weight)

    def with_order(self, N: int) -> "SymbolSpace":
        r = self.ring
        ring = PolyRing(r.names, r.kinds, r.degree_cap, r.cutoff, N, r.field)
        return SymbolSpace(ring, self.base_names, self.fiber_names, self.A, self.poisson, self.hbar)


def symbol_space(A: AlgebroidPresentation, N: int, fiber_prefix: str = "xi") -> SymbolSpace:
    """Symbol space of A* with hbar kept through order N."""
    base = A.ring
    fib = tuple(f"{fiber_prefix}{i + 1}" for i in range(A.rank))
    ring = PolyRing(base.names + fib + ("hbar",), base.kinds + (POLY,) * A.rank + (HBAR,),
                    None, base.cutoff, N, base.field)
    return SymbolSpace(ring, base.names, fib, A)


def darboux_space(k: int, N: int, field=None) -> SymbolSpace:
    """R^{2k} with coordinates q_i (base), p_i (fiber) and {q_i, p_i} = 1."""
    from .scalars import EXACT

    q = tuple(f"q{i + 1}" for i in range(k))
    p = tuple(f"p{i + 1}" for i in range(k))
    ring = PolyRing(q + p + ("hbar",), (POLY,) * (2 * k) + (HBAR,), None, None, N, field or EXACT)
    pois = tuple((qi, pi, 1) for qi, pi in zip(q, p))
    return SymbolSpace(ring, q, p, None, pois)


@dataclass(frozen=True)
class Weight:
    """Gaussian factor ``exp(-sum_{v in names} v^2 / (2 s))``."""

    names: tuple
    s: Fraction

    def combine(self, other: "Weight") -> "Weight":
        if set(self.names) != set(other.names):
            raise SymbolError("Gaussian weights over different variables cannot be multiplied")
        return Weight(self.names, self.s * other.s / (self.s + other.s))


# ---------------------------------------------------------------------------
# symbols


class SymbolSeries:
    """Polynomial in base, fiber and hbar variables, optionally Gaussian-weighted."""

    __slots__ = ("space", "poly", "weight")

    def __init__(self, space: SymbolSpace, poly: Poly, weight: Weight | None = None):
        if poly.ring != space.ring:
            raise RingMismatchError("symbol polynomial lives in a different ring")
        self.space = space
        self.poly = poly
        self.weight = weight

    def _coerce(self, other) -> "SymbolSeries":
        if isinstance(other, SymbolSeries):
            if other.space.ring != self.space.ring:
                raise RingMismatchError("symbols over different spaces")
            return other
        return SymbolSeries(self.space, self.space.ring.const(other))

    def _same_weight(self, other: "SymbolSeries") -> Weight | None:
        if not self.poly:
            return other.weight
        if not other.poly:
            return self.weight
        if self.weight != other.weight:
            raise SymbolError("sum of symbols with different Gaussian weights")
        return self.weight

    def __add__(self, other):
        other = self._coerce(other)
        w = self._same_weight(other)
        return SymbolSeries(self.space, self.poly + other.poly, w)

    __radd__ = __add__

    def __neg__(self):
        return SymbolSeries(self.space, -self.poly, self.weight)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        """Pointwise (commutative) product."""
        if not isinstance(other, SymbolSeries):
            return SymbolSeries(self.space, self.poly * other, self.weight)
        other = self._coerce(other)
        if self.weight and other.weight:
            w = self.weight.combine(other.weight)
        else:
            w = self.weight or other.weight
        return SymbolSeries(self.space, self.poly * other.poly, w)

    def __rmul__(self, other):
        return self * other

    def __pow__(self, n: int):
        if n < 0:
            raise SymbolError("negative powers of symbols are not polynomial")
        out = self._coerce(1)
        for _ in range(n):
            out = out * self
        return out

    def __bool__(self):
        return bool(self.poly)

    def __eq__(self, other):
        if not isinstance(other, SymbolSeries):
            return NotImplemented
        if not self.poly and not other.poly:
            return True
        return self.weight == other.weight and self.poly == other.poly

    def __hash__(self):
        return hash((self.poly, self.weight))

    def __repr__(self):
        w = f" * exp(-|{','.join(self.weight.names)}|^2/(2*{self.weight.s}))" if self.weight else ""
        return f"({self.poly}){w}"

    def is_zero(self, tol: float | None = None) -> bool:
        return self.poly.is_zero(tol)

    def diff(self, name: str) -> "SymbolSeries":
        d = self.poly.diff(name)
        w = self.weight
        if w and name in w.names:
            d = d - self.poly * self.space.ring.gen(name) * (1 / w.s)
        return SymbolSeries(self.space, d, w)

    def hbar_coeff(self, k: int) -> "SymbolSeries":
        return SymbolSeries(self.space, self.poly.substitute_degree(self.space.hbar, k), self.weight)

    def hbar_part(self, k: int) -> "SymbolSeries":
        """The ``hbar^k`` term including its hbar factor."""
        return SymbolSeries(self.space, self.hbar_coeff(k).poly * self.space.ring.gen(self.space.hbar) ** k,
                            self.weight)

    def truncate_hbar(self, n: int) -> "SymbolSeries":
        i = self.space.ring.index(self.space.hbar)
        return SymbolSeries(self.space, self.poly._new({e: c for e, c in self.poly.terms.items() if e[i] <= n}),
                            self.weight)

    def lowest_hbar_order(self) -> int | None:
        i = self.space.ring.index(self.space.hbar)
        return min((e[i] for e in self.poly.terms), default=None)

    def evaluate(self, point: Mapping[str, complex]) -> complex:
        v = self.poly.evaluate(point)
        if self.weight:
            v *= math.exp(-sum(point.get(n, 0.0) ** 2 for n in self.weight.names) / (2 * float(self.weight.s)))
        return v


def _hbar_poly(space: SymbolSpace, k: int, c=1) -> Poly:
    return space.ring.gen(space.hbar) ** k * c if k else space.ring.const(c)


# ---------------------------------------------------------------------------
# Lie-Poisson structure


def _embed_list(space, polys):
    return [embed(p, space.ring) for p in polys]


def lie_poisson(a: SymbolSeries, b: SymbolSeries) -> SymbolSeries:
    """Lie-Poisson bracket on A* (or the constant bracket of a Darboux space)."""
    sp = a.space
    if b.space.ring != sp.ring:
        raise RingMismatchError("symbols over different algebroids")
    zero = SymbolSeries(sp, sp.ring.zero())
    if sp.A is None:
        out = zero
        for u, v, c in sp.poisson:
            out = out + a.diff(u) * b.diff(v) * c - a.diff(v) * b.diff(u) * c
        return out
    A = sp.A
    r = A.rank
    fib = sp.fiber_names
    da = [a.diff(n) for n in fib]
    db = [b.diff(n) for n in fib]
    out = zero
    for i in range(r):
        for j in range(r):
            if i == j:
                continue
            coef = sp.ring.zero()
            for k in range(r):
                c = A.c(i, j, k)
                if c:
                    coef = coef - embed(c, sp.ring) * sp.ring.gen(fib[k])
            if coef:
                out = out + da[i] * db[j] * coef
    for i in range(r):
        for ai, name in enumerate(sp.base_names):
            comp = A.anchor[i][ai] if A.anchor[i] else None
            if comp is None or not comp:
                continue
            rho = embed(comp, sp.ring)
            out = out + (da[i] * b.diff(name) - a.diff(name) * db[i]) * rho
    return out


def poisson_tensor(space: SymbolSpace) -> list:
    """Constant Poisson entries ``(u, v, c)`` with u before v, or raise."""
    if space.A is None:
        return [(u, v, Fraction(1) * c if not isinstance(c, Cx) else c) for u, v, c in space.poisson]
    A = space.A
    for i in range(A.rank):
        for j in range(A.rank):
            for k in range(A.rank):
                if A.c(i, j, k):
                    raise UnsupportedModelError("Lie-Poisson structure is not constant (Darboux form needed)")
    out = []
    for i in range(A.rank):
        for a, comp in enumerate(A.anchor[i] or []):
            if not comp:
                continue
            if not comp.is_constant():
                raise UnsupportedModelError("anchor is not constant (Darboux form needed)")
            # {x_a, xi_i} = -rho^a_i
            out.append((space.base_names[a], space.fiber_names[i], -comp.constant_term()))
    return out


# ---------------------------------------------------------------------------
# star products


class StarProduct:
    """Formal product ``a*b = sum_k hbar^k c_k(a, b)`` truncated at ``hbar^N``."""

    convention = "abstract"
    homogeneous = True

    def __init__(self, space: SymbolSpace, N: int | None = None):
        self.space = space if N is None or N == space.N else space.with_order(N)
        self.N = self.space.N

    def _lift(self, a: SymbolSeries) -> SymbolSeries:
        if a.space.ring == self.space.ring:
            return a
        if a.space.ring.names != self.space.ring.names:
            raise RingMismatchError("symbol does not belong to this star product")
        return SymbolSeries(self.space, Poly(self.space.ring, a.poly.terms), a.weight)

    def c(self, k: int, a: SymbolSeries, b: SymbolSeries) -> SymbolSeries:
        raise NotImplementedError

    def __call__(self, a, b) -> SymbolSeries:
        a, b = self._lift(a), self._lift(b)
        out = a * b
        for k in range(1, self.N + 1):
            ck = self.c(k, a, b)
            if ck:
                out = out + ck * _hbar_poly(self.space, k)
        return out

    def commutator(self, a, b) -> SymbolSeries:
        return self(a, b) - self(b, a)

    def associator(self, a, b, c) -> SymbolSeries:
        return self(self(a, b), c) - self(a, self(b, c))


class ConstantBidifferentialStar(StarProduct):
    """``a*b = sum_n hbar^(p n) / n! B^n(a, b)`` for a constant bivector B.

    ``hbar_power`` p = 2 gives an inhomogeneous product (used as a negative
    control for the homogeneity operator).
    """

    def __init__(self, space, B: Sequence, N=None, convention="", hbar_power: int = 1):
        super().__init__(space, N)
        self.B = [(u, v, Cx.coerce(c) if space.ring.field.exact else complex(c)) for u, v, c in B]
        self.convention = convention
        self.hbar_power = hbar_power
        self.homogeneous = hbar_power == 1

    def _bi(self, n: int, a: SymbolSeries, b: SymbolSeries, cache_a: dict, cache_b: dict) -> SymbolSeries:
        terms = {((), ()): 1}
        for _ in range(n):
            nxt: dict = {}
            for (al, be), c in terms.items():
                for u, v, bc in self.B:
                    key = (tuple(sorted(al + (u,))), tuple(sorted(be + (v,))))
                    nxt[key] = nxt.get(key, 0) + c * bc
            terms = nxt
        out = SymbolSeries(self.space, self.space.ring.zero())
        for (al, be), c in terms.items():
            if not c:
                continue
            da = _deriv(a, al, cache_a)
            if not da:
                continue
            db = _deriv(b, be, cache_b)
            if not db:
                continue
            out = out + da * db * c
        return out * Fraction(1, math.factorial(n))

    def c(self, k, a, b):
        if k % self.hbar_power:
            return SymbolSeries(self.space, self.space.ring.zero())
        return self._bi(k // self.hbar_power, a, b, {}, {})

    def __call__(self, a, b):
        a, b = self._lift(a), self._lift(b)
        ca, cb = {}, {}
        out = a * b
        for n in range(1, self.N // self.hbar_power + 1):
            t = self._bi(n, a, b, ca, cb)
            if t:
                out = out + t * _hbar_poly(self.space, n * self.hbar_power)
        return out


def _deriv(a: SymbolSeries, idx: tuple, cache: dict) -> SymbolSeries:
    if idx in cache:
        return cache[idx]
    if not idx:
        v = a
    else:
        v = _deriv(a, idx[:-1], cache).diff(idx[-1])
    cache[idx] = v
    return v


def moyal(space: SymbolSpace, N: int | None = None, hbar_power: int = 1) -> ConstantBidifferentialStar:
    """Weyl-ordered (Moyal) product ``exp((-i hbar / 2) P)`` for the constant Poisson tensor P."""
    half = Cx(0, Fraction(-1, 2)) if space.ring.field.exact else -0.5j
    B = []
    for u, v, c in poisson_tensor(space):
        B.append((u, v, half * c))
        B.append((v, u, -half * c))
    conv = "moyal" if hbar_power == 1 else f"moyal(hbar^{hbar_power})"
    return ConstantBidifferentialStar(space, B, N, conv, hbar_power)


def normal_ordered(space: SymbolSpace, N: int | None = None) -> ConstantBidifferentialStar:
    """Standard-ordered product ``exp(i hbar d_p (x) d_q)`` on a Darboux space."""
    if space.poisson is None:
        raise UnsupportedModelError("normal ordering needs a Darboux space")
    i = Cx(0, 1) if space.ring.field.exact else 1j
    B = [(p, q, i * c) for q, p, c in space.poisson]
    return ConstantBidifferentialStar(space, B, N, "normal-ordered")


def moyal_star(a: SymbolSeries, b: SymbolSeries, N: int | None = None) -> SymbolSeries:
    return moyal(a.space, N)(a, b)


class TangentStar(StarProduct):
    """Normal-ordered product for abelian algebroids with commuting anchors.

    ``a*b = sum_alpha (-i hbar)^|alpha| / alpha! d_xi^alpha a . rho^alpha b``.
    """

    convention = "normal-ordered"

    def __init__(self, space, N=None):
        super().__init__(space, N)
        A = space.A
        self._rho = [[embed(c, self.space.ring) if c else None for c in (A.anchor[i] or [])] for i in range(A.rank)]

    def _rho_apply(self, i: int, b: SymbolSeries) -> SymbolSeries:
        out = SymbolSeries(self.space, self.space.ring.zero(), b.weight)
        for a, comp in enumerate(self._rho[i]):
            if comp is not None:
                out = out + b.diff(self.space.base_names[a]) * comp
        return out

    def c(self, k, a, b):
        sp = self.space
        r = sp.rank
        mi = Cx(0, -1) if sp.ring.field.exact else -1j
        out = SymbolSeries(sp, sp.ring.zero())
        for alpha in _multi_indices(r, k):
            da = a
            for i, m in enumerate(alpha):
                for _ in range(m):
                    da = da.diff(sp.fiber_names[i])
            if not da:
                continue
            rb = b
            for i, m in enumerate(alpha):
                for _ in range(m):
                    rb = self._rho_apply(i, rb)
            if not rb:
                continue
            fact = 1
            for m in alpha:
                fact *= math.factorial(m)
            out = out + da * rb * (mi**k * Fraction(1, fact))
        return out


def _multi_indices(r: int, k: int):
    if r == 0:
        if k == 0:
            yield ()
        return
    if r == 1:
        yield (k,)
        return
    for m in range(k + 1):
        for rest in _multi_indices(r - 1, k - m):
            yield (m,) + rest


class PBWStar(StarProduct):
    """Product on polynomial symbols of a Lie algebra, transported from U(g).

    Fiber monomials are identified with U(g) through symmetrization and the
    relation ``[xi_j, xi_k] = kappa c^m_jk xi_m`` with ``kappa = i hbar``
    (``scaled=True``) or ``kappa = i`` (the unscaled enveloping algebra).
    U(g) elements are stored as polynomials read in the ordered PBW basis.
    """

    convention = "pbw-symmetrized"

    def __init__(self, space: SymbolSpace, N=None, scaled: bool = True):
        super().__init__(space, N)
        A = space.A
        if A is None or A.ring.names:
            raise UnsupportedModelError("PBW product needs a Lie algebra over a point")
        ring = self.space.ring
        self.scaled = scaled
        self.r = A.rank
        self._fib_idx = [ring.index(n) for n in space.fiber_names]
        self._h_idx = ring.index(space.hbar)
        i = Cx(0, 1) if ring.field.exact else 1j
        self._kappa = ring.gen(space.hbar) * i if scaled else ring.const(i)
        self._c = {}
        for j in range(self.r):
            for k in range(self.r):
                for m in range(self.r):
                    v = A.c(j, k, m).constant_term()
                    if v:
                        self._c.setdefault((j, k), []).append((m, v))
        self._rm_cache: dict = {}
        self._sym_cache: dict = {}

    # ordered-basis helpers
    def _mono(self, alpha, coeff=1) -> Poly:
        e = [0] * self.space.ring.nvars
        for i, a in zip(self._fib_idx, alpha):
            e[i] = a
        return Poly(self.space.ring, {tuple(e): coeff})

    def _split(self, e):
        return tuple(e[i] for i in self._fib_idx), e[self._h_idx]

    def _right_mul(self, alpha: tuple, j: int) -> Poly:
        key = (alpha, j)
        hit = self._rm_cache.get(key)
        if hit is not None:
            return hit
        top = max((i for i, a in enumerate(alpha) if a), default=-1)
        if top <= j:
            al = list(alpha)
            al[j] += 1
            res = self._mono(tuple(al))
        else:
            k = top
            rest = list(alpha)
            rest[k] -= 1
            rest = tuple(rest)
            res = self._times_letter(self._right_mul(rest, j), k)
            for m, v in self._c.get((j, k), []):
                res = res - self._right_mul(rest, m) * self._kappa * v
        self._rm_cache[key] = res
        return res

    def _times_letter(self, u: Poly, j: int) -> Poly:
        out: dict = {}
        hi = self._h_idx
        for e, c in u.terms.items():
            alpha, h = self._split(e)
            for e2, c2 in self._right_mul(alpha, j).terms.items():
                if h:
                    e2 = e2[:hi] + (e2[hi] + h,) + e2[hi + 1:]
                v = out.get(e2)
                out[e2] = c * c2 if v is None else v + c * c2
        return Poly(self.space.ring, out)

    def umul(self, u: Poly, v: Poly) -> Poly:
        """Product in the enveloping algebra (ordered basis on both sides)."""
        out = self.space.ring.zero()
        hgen = self.space.ring.gen(self.space.hbar)
        for e2, c2 in v.terms.items():
            beta, h2 = self._split(e2)
            word = [i for i, m in enumerate(beta) for _ in range(m)]
            w = u
            for j in word:
                w = self._times_letter(w, j)
            w = w * c2
            if h2:
                w = w * hgen**h2
            out = out + w
        return out

    def sym(self, alpha: tuple) -> Poly:
        hit = self._sym_cache.get(alpha)
        if hit is None:
            self._fill_sym(sum(alpha))
            hit = self._sym_cache[alpha]
        return hit

    def _fill_sym(self, n: int):
        # (sum_i t_i xi_i)^n = sum_alpha n!/alpha! t^alpha sym(xi^alpha)
        powers = {(0,) * self.r: self.space.ring.one()}
        for _ in range(n):
            nxt: dict = {}
            for beta, u in powers.items():
                for i in range(self.r):
                    b2 = list(beta)
                    b2[i] += 1
                    b2 = tuple(b2)
                    v = self._times_letter(u, i)
                    nxt[b2] = nxt[b2] + v if b2 in nxt else v
            powers = nxt
        for alpha, u in powers.items():
            af = 1
            for m in alpha:
                af *= math.factorial(m)
            self._sym_cache[alpha] = u * Fraction(af, math.factorial(n))

    def to_enveloping(self, a: SymbolSeries) -> Poly:
        out = self.space.ring.zero()
        hgen = self.space.ring.gen(self.space.hbar)
        for e, c in a.poly.terms.items():
            alpha, h = self._split(e)
            t = self.sym(alpha) * c
            if h:
                t = t * hgen**h
            out = out + t
        return out

    def from_enveloping(self, u: Poly) -> SymbolSeries:
        ring = self.space.ring
        hgen = ring.gen(self.space.hbar)
        out = ring.zero()
        while u:
            deg = max(sum(self._split(e)[0]) for e in u.terms)
            lead = {e: c for e, c in u.terms.items() if sum(self._split(e)[0]) == deg}
            step = ring.zero()
            for e, c in lead.items():
                alpha, h = self._split(e)
                t = self.sym(alpha) * c
                if h:
                    t = t * hgen**h
                step = step + t
                out = out + Poly(ring, {e: c})
            u = u - step
        return SymbolSeries(self.space, out)

    def __call__(self, a, b):
        a, b = self._lift(a), self._lift(b)
        if a.weight or b.weight:
            raise SymbolError("PBW product is defined on fiber-polynomial symbols")
        return self.from_enveloping(self.umul(self.to_enveloping(a), self.to_enveloping(b)))

    def c(self, k, a, b):
        return self(a, b).hbar_coeff(k) if self.scaled else None


def pbw_product(space: SymbolSpace, N: int | None = None) -> StarProduct:
    """The homogeneous normal-ordered product supported by ``space``'s algebroid."""
    A = space.A
    if A is None:
        raise UnsupportedModelError("PBW product needs an algebroid")
    abelian = all(not A.c(i, j, k) for i in range(A.rank) for j in range(A.rank) for k in range(A.rank))
    if not A.ring.names:
        return PBWStar(space, N)
    if abelian:
        return TangentStar(space, N)
    raise UnsupportedModelError("PBW product over a nontrivial base needs an abelian algebroid")


def pbw_star(a: SymbolSeries, b: SymbolSeries, N: int | None = None) -> SymbolSeries:
    return pbw_product(a.space, N)(a, b)


# ---------------------------------------------------------------------------
# homogeneity operator


def homogeneity_xi(a: SymbolSeries) -> SymbolSeries:
    """``hbar d/dhbar`` plus the Euler derivative along the fibers."""
    sp = a.space
    out = a.diff(sp.hbar) * sp.ring.gen(sp.hbar)
    for n in sp.fiber_names:
        out = out + a.diff(n) * sp.ring.gen(n)
    return out


def xi_derivation_defect(star: StarProduct, a: SymbolSeries, b: SymbolSeries) -> SymbolSeries:
    """``Xi(a*b) - Xi(a)*b - a*Xi(b)``; zero for homogeneous products."""
    return homogeneity_xi(star(a, b)) - star(homogeneity_xi(a), b) - star(a, homogeneity_xi(b))


# ---------------------------------------------------------------------------
# hbar-trace


def gaussian_moment(n: int, s) -> float:
    """``int v^n exp(-v^2/(2s)) dv`` over the real line."""
    if n % 2:
        return 0.0
    s = float(s)
    dfact = 1
    for m in range(n - 1, 0, -2):
        dfact *= m
    return dfact * s ** (n / 2) * math.sqrt(2 * math.pi * s)


def integrate_symbol(a: SymbolSeries, density: Poly | complex | None = None,
                     measure: str = "lebesgue") -> complex:
    """Integral of an hbar-free symbol over A*.

    Torus variables integrate to ``2 pi`` times the zero mode; polynomial
    variables must carry the Gaussian weight. ``measure="normalized"`` divides
    by ``(2 pi)^r`` with r the fiber rank.
    """
    sp = a.space
    poly = a.poly
    if density is not None:
        poly = poly * (embed(density, sp.ring) if isinstance(density, Poly) else density)
    w = a.weight
    wnames = set(w.names) if w else set()
    kinds = sp.ring.kinds
    names = sp.ring.names
    for n, k in zip(names, kinds):
        if k == POLY and n not in wnames:
            raise SymbolError(f"symbol is not integrable in {n!r} (no Gaussian weight)")
    total = 0j
    for e, c in poly.terms.items():
        m = complex(c)
        for n, k, p in zip(names, kinds, e):
            if k == HBAR:
                continue
            if k == FOURIER:
                if p:
                    m = 0.0
                    break
                m *= 2 * math.pi
            else:
                m *= gaussian_moment(p, w.s)
            if m == 0:
                break
        total += m
    if measure == "normalized":
        total /= (2 * math.pi) ** sp.rank
    elif measure != "lebesgue":
        raise ValueError(f"unknown measure {measure!r}")
    return total


def hbar_trace(a: SymbolSeries, density: Poly | complex | None = None, measure: str = "lebesgue",
               r: int | None = None) -> HbarSeries:
    """``hbar^(-r) int a Omega`` coefficient-wise; r defaults to the fiber rank."""
    sp = a.space
    r = sp.rank if r is None else r
    N = sp.N
    coeffs = [integrate_symbol(a.hbar_coeff(k), density, measure) for k in range(N + 1)]
    return HbarSeries(coeffs, order=N - r, pole=r)


# ---------------------------------------------------------------------------
# equivalences


@dataclass
class DiffOpSeries:
    """``E = sum coeff * hbar^k * d^alpha`` with constant coefficients.

    ``terms`` holds ``(coeff, k, alpha)`` with alpha a tuple of variable names.
    """

    terms: list

    def __call__(self, a: SymbolSeries) -> SymbolSeries:
        return apply_equivalence(self, a)


def identity_op() -> DiffOpSeries:
    return DiffOpSeries([(1, 0, ())])


def exp_op(u: str, v: str, factor, N: int) -> DiffOpSeries:
    """``exp(factor * hbar * d_u d_v)`` through ``hbar^N``."""
    terms = []
    for k in range(N + 1):
        c = (Cx.coerce(factor) ** k if not isinstance(factor, complex) else factor**k) * Fraction(1, math.factorial(k))
        terms.append((c, k, (u,) * k + (v,) * k))
    return DiffOpSeries(terms)


def apply_equivalence(E: DiffOpSeries, a: SymbolSeries) -> SymbolSeries:
    sp = a.space
    out = SymbolSeries(sp, sp.ring.zero())
    cache: dict = {}
    for c, k, alpha in E.terms:
        d = _deriv(a, tuple(sorted(alpha)), cache)
        if d:
            out = out + d * _hbar_poly(sp, k, c)
    return out


@dataclass
class EquivalenceReport:
    passed: bool
    failures: list = dc_field(default_factory=list)
    xi_commutes: bool | None = None

    @property
    def lowest_failing_order(self) -> int | None:
        return min((f["hbar_order"] for f in self.failures), default=None)


def verify_equivalence(E: DiffOpSeries, star: StarProduct, star2: StarProduct, pairs: Iterable,
                       N: int | None = None, check_xi: bool = False) -> EquivalenceReport:
    """Check ``E(a*b) = E(a) *' E(b)`` modulo ``hbar^(N+1)`` on the given pairs."""
    N = star.N if N is None else N
    failures = []
    pairs = list(pairs)
    for idx, (a, b) in enumerate(pairs):
        res = (apply_equivalence(E, star(a, b)) - star2(apply_equivalence(E, a), apply_equivalence(E, b)))
        res = res.truncate_hbar(N)
        if res:
            failures.append({"pair": idx, "hbar_order": res.lowest_hbar_order(), "residual": res})
    xi_ok = None
    if check_xi:
        xi_ok = True
        for a, b in pairs:
            for s in (a, b):
                d = apply_equivalence(E, homogeneity_xi(s)) - homogeneity_xi(apply_equivalence(E, s))
                if d.truncate_hbar(N):
                    xi_ok = False
    return EquivalenceReport(not failures and xi_ok is not False, failures, xi_ok)


# ---------------------------------------------------------------------------
# flat Fedosov construction


class WeylAlgebra:
    """Form-valued formal Weyl algebra on R^{2k} with constant Poisson matrix ``P``.

    Elements are dicts ``{form index tuple: Poly}`` in variables ``x_i`` (base),
    ``y_i`` (fiber) and ``hbar``. Weyl degree counts ``y`` once and ``hbar``
    twice; elements are kept modulo Weyl degree ``> cap``. The fiber product is
    Moyal, so ``[y_i, y_j] = -i hbar P_ij``.
    """

    def __init__(self, k: int, P=None, cap: int = 6, field=None):
        from .scalars import EXACT

        self.k = k
        self.n = n = 2 * k
        if P is None:
            P = [[0] * n for _ in range(n)]
            for i in range(k):
                P[i][i + k] = 1
                P[i + k][i] = -1
        self.P = [[Fraction(v) for v in row] for row in P]
        self.cap = cap
        self.x = tuple(f"x{i + 1}" for i in range(n))
        self.y = tuple(f"y{i + 1}" for i in range(n))
        self.ring = PolyRing(self.x + self.y + ("hbar",), (POLY,) * (2 * n) + (HBAR,), None, None, None,
                             field or EXACT)
        self._yi = [self.ring.index(v) for v in self.y]
        self._hi = self.ring.index("hbar")
        self.half = Cx(0, Fraction(-1, 2))
        W = _inverse(self.P)
        self.W = W

    # elements
    def elem(self, comps: Mapping) -> dict:
        return {tuple(I): p for I, p in comps.items() if p}

    def scalar(self, p: Poly) -> dict:
        return self.elem({(): p})

    def wdeg(self, e) -> int:
        return sum(e[i] for i in self._yi) + 2 * e[self._hi]

    def trunc_poly(self, p: Poly, cap=None) -> Poly:
        cap = self.cap if cap is None else cap
        return p._new({e: c for e, c in p.terms.items() if self.wdeg(e) <= cap})

    def trunc(self, a: dict, cap=None) -> dict:
        return self.elem({I: self.trunc_poly(p, cap) for I, p in a.items()})

    def add(self, *els) -> dict:
        out: dict = {}
        for a in els:
            for I, p in a.items():
                out[I] = out[I] + p if I in out else p
        return self.elem(out)

    def scale(self, a: dict, c) -> dict:
        return self.elem({I: p * c for I, p in a.items()})

    def sub(self, a, b):
        return self.add(a, self.scale(b, -1))

    # fiber product
    def fiber_mul(self, a: Poly, b: Poly) -> Poly:
        out = a * b
        h = self.ring.gen("hbar")
        terms = {((), ()): Fraction(1)}
        ca, cb = {}, {}
        n = 0
        while True:
            n += 1
            nxt: dict = {}
            for (al, be), c in terms.items():
                for i in range(self.n):
                    for j in range(self.n):
                        pij = self.P[i][j]
                        if pij:
                            key = (tuple(sorted(al + (i,))), tuple(sorted(be + (j,))))
                            nxt[key] = nxt.get(key, 0) + c * pij
            terms = nxt
            add = self.ring.zero()
            any_live = False
            for (al, be), c in terms.items():
                da = self._yd(a, al, ca)
                if not da:
                    continue
                db = self._yd(b, be, cb)
                if not db:
                    continue
                any_live = True
                add = add + da * db * c
            if not any_live:
                break
            out = out + add * (self.half**n * Fraction(1, math.factorial(n))) * h**n
        return out

    def _yd(self, a: Poly, idx, cache):
        if idx in cache:
            return cache[idx]
        v = a if not idx else self._yd(a, idx[:-1], cache).diff(self._yi[idx[-1]])
        cache[idx] = v
        return v

    def _split_deg(self, p: Poly) -> dict:
        out: dict = {}
        for e, c in p.terms.items():
            out.setdefault(self.wdeg(e), {})[e] = c
        return {d: Poly(self.ring, t) for d, t in out.items()}

    def capped_mul(self, p: Poly, q: Poly, cap: int) -> Poly:
        """Fiber product dropping Weyl degree above ``cap`` (the product adds degrees)."""
        out = self.ring.zero()
        qs = self._split_deg(q)
        for d1, p1 in self._split_deg(p).items():
            for d2, q1 in qs.items():
                if d1 + d2 <= cap:
                    out = out + self.fiber_mul(p1, q1)
        return out

    def mul(self, a: dict, b: dict, cap=None) -> dict:
        """Form product; ``cap`` defaults to two above the Weyl cap, leaving room for one hbar division."""
        cap = self.cap + 2 if cap is None else cap
        out: dict = {}
        for I, p in a.items():
            for J, q in b.items():
                s, K = _wedge_idx(I, J)
                if not s:
                    continue
                v = self.capped_mul(p, q, cap)
                out[K] = out[K] + v * s if K in out else v * s
        return self.elem(out)

    def commutator(self, a: dict, b: dict, cap=None) -> dict:
        """Graded commutator, capped like :meth:`mul`."""
        cap = self.cap + 2 if cap is None else cap
        out: dict = {}
        for I, p in a.items():
            for J, q in b.items():
                s, K = _wedge_idx(I, J)
                if not s:
                    continue
                # the Koszul sign of the graded commutator cancels against reordering dx^J dx^I
                v = self.capped_mul(p, q, cap) - self.capped_mul(q, p, cap)
                if v:
                    out[K] = out[K] + v * s if K in out else v * s
        return self.elem(out)

    def div_hbar(self, a: dict) -> dict:
        out = {}
        for I, p in a.items():
            t = {}
            for e, c in p.terms.items():
                if e[self._hi] == 0:
                    raise FedosovError("term not divisible by hbar", self.wdeg(e))
                e2 = list(e)
                e2[self._hi] -= 1
                t[tuple(e2)] = c
            out[I] = Poly(self.ring, t)
        return self.elem(out)

    # form operators
    def delta(self, a: dict) -> dict:
        out: dict = {}
        for I, p in a.items():
            for i in range(self.n):
                d = p.diff(self._yi[i])
                if not d:
                    continue
                s, K = _wedge_idx((i,), I)
                if s:
                    out[K] = out[K] + d * s if K in out else d * s
        return self.elem(out)

    def d(self, a: dict) -> dict:
        out: dict = {}
        for I, p in a.items():
            for i in range(self.n):
                d = p.diff(self.x[i])
                if not d:
                    continue
                s, K = _wedge_idx((i,), I)
                if s:
                    out[K] = out[K] + d * s if K in out else d * s
        return self.elem(out)

    def delta_inv(self, a: dict) -> dict:
        """``(1/(p+q)) y^i iota_i`` on terms of y-degree p and form degree q."""
        out: dict = {}
        for I, p in a.items():
            q = len(I)
            if q == 0:
                continue
            for e, c in p.terms.items():
                pdeg = sum(e[i] for i in self._yi)
                mono = Poly(self.ring, {e: c})
                for pos, i in enumerate(I):
                    K = I[:pos] + I[pos + 1:]
                    t = mono * self.ring.gen(self.y[i]) * Fraction((-1) ** pos, pdeg + q)
                    out[K] = out[K] + t if K in out else t
        return self.elem(out)

    def sigma(self, a: dict) -> Poly:
        """Form degree 0, y = 0 part."""
        p = a.get((), self.ring.zero())
        return p._new({e: c for e, c in p.terms.items() if not any(e[i] for i in self._yi)})

    def y_dependent(self, a: dict) -> dict:
        return self.elem({I: p._new({e: c for e, c in p.terms.items() if any(e[i] for i in self._yi)})
                          for I, p in a.items()})

    def by_degree(self, a: dict) -> dict:
        out: dict = {}
        for I, p in a.items():
            for e, c in p.terms.items():
                out.setdefault(self.wdeg(e), {}).setdefault(I, {})[e] = c
        return {d: self.elem({I: Poly(self.ring, t) for I, t in comp.items()}) for d, comp in out.items()}


def _wedge_idx(I: tuple, J: tuple):
    if set(I) & set(J):
        return 0, None
    seq = list(I) + list(J)
    sign = 1
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                sign = -sign
    return sign, tuple(sorted(seq))


def _inverse(M):
    n = len(M)
    A = [[Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r][col])
        A[col], A[piv] = A[piv], A[col]
        pv = A[col][col]
        A[col] = [v / pv for v in A[col]]
        for r in range(n):
            if r != col and A[r][col]:
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[col])]
    return [row[n:] for row in A]


@dataclass
class FedosovResult:
    """Output of :func:`fedosov_recursion`.

    ``A`` is the full connection 1-form (``A0 + Gamma + r``), ``curvature`` the
    Weyl curvature ``dA + A o A / hbar``, ``central_defects`` the y-dependent
    part of the curvature per Weyl degree (empty when central).
    """

    weyl: WeylAlgebra
    gamma: dict
    r: dict
    A: dict
    curvature: dict
    central_defects: dict
    iterations: int
    N: int
    _sections: dict = dc_field(default_factory=dict, repr=False)

    @property
    def central(self) -> bool:
        return not self.central_defects

    def central_form(self) -> dict:
        """Curvature as ``{(i, j): Poly in hbar}`` (constant 2-form coefficients)."""
        return {I: p for I, p in self.curvature.items()}

    def flat_section(self, a: Poly, cap: int | None = None) -> dict:
        """Flat lift Q(a) with sigma(Q(a)) = a, modulo Weyl degree above ``cap``.

        The default cap 2N is all the induced product needs through hbar^N.
        """
        W = self.weyl
        cap = 2 * self.N if cap is None else cap
        if a.ring != W.ring:
            a = Poly(W.ring, _rename(a, W))
        key = (a, cap)
        hit = self._sections.get(key)
        if hit is not None:
            return hit
        base = W.scalar(a)
        Q = base
        for _ in range(cap + 2):
            nab = W.add(W.d(Q), W.div_hbar(W.commutator(self.gamma, Q, cap + 2)))
            rq = W.div_hbar(W.commutator(self.r, Q, cap + 2)) if self.r else {}
            Qn = W.trunc(W.add(base, W.delta_inv(W.add(nab, rq))), cap)
            if Qn == Q:
                break
            Q = Qn
        self._sections[key] = Q
        return Q

    def star(self, a: Poly, b: Poly) -> Poly:
        W = self.weyl
        s = W.sigma(W.mul(self.flat_section(a), self.flat_section(b), 2 * self.N))
        h = W._hi
        return s._new({e: c for e, c in s.terms.items() if e[h] <= self.N})

    def flatness_defect(self, a: Poly) -> dict:
        """``D Q(a)``; zero modulo the Weyl cap when Q(a) is flat."""
        W = self.weyl
        Q = self.flat_section(a, W.cap)
        DQ = W.add(W.d(Q), W.div_hbar(W.commutator(self.A, Q)))
        return W.trunc(DQ, W.cap - 1)


def _rename(a: Poly, W: WeylAlgebra) -> dict:
    out = {}
    names = a.ring.names
    for e, c in a.terms.items():
        e2 = [0] * W.ring.nvars
        for n, p in zip(names, e):
            e2[W.ring.index(n)] = p
        out[tuple(e2)] = c
    return out


def fedosov_recursion(k: int = 1, N: int = 4, gamma=None, omega1=None, P=None, cap: int | None = None,
                      field=None) -> FedosovResult:
    """Flat Fedosov construction on R^{2k} with constant data.

    Args:
        gamma: totally symmetric constant tensor ``G_ijk``; the connection term
            is ``1/2 G_ijk y^i y^j dx^k`` and its Weyl curvature plays the role
            of the curvature input. ``None`` means the flat connection.
        omega1: antisymmetric constant matrix; ``hbar * omega1`` is added to the
            central curvature.
        P: Poisson matrix of the fiber (default standard Darboux).
        cap: Weyl degree cap (default ``2 N + 2``).
    """
    cap = 2 * N + 2 if cap is None else cap
    W = WeylAlgebra(k, P, cap, field)
    n = W.n
    ring = W.ring
    y = [ring.gen(v) for v in W.y]
    i_unit = Cx(0, 1)
    A0 = W.elem({(i,): sum((y[j] * (i_unit * W.W[j][i]) for j in range(n)), ring.zero()) for i in range(n)})
    G = {}
    if gamma is not None:
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    v = Fraction(gamma[a][b][c])
                    if v:
                        G.setdefault((c,), ring.zero())
                        G[(c,)] = G[(c,)] + y[a] * y[b] * (v / 2)
    Gam = W.elem(G)
    curv_in = W.div_hbar(W.mul(Gam, Gam)) if Gam else {}
    om1 = {}
    if omega1 is not None:
        for a in range(n):
            for b in range(a + 1, n):
                v = Fraction(omega1[a][b])
                if v:
                    om1[(a, b)] = ring.gen("hbar") * v
    om1 = W.elem(om1)
    r: dict = {}
    it = 0
    for it in range(1, cap + 2):
        nab = W.add(W.d(r), W.div_hbar(W.commutator(Gam, r))) if r else {}
        rr = W.div_hbar(W.mul(r, r)) if r else {}
        rn = W.trunc(W.delta_inv(W.sub(W.add(curv_in, nab, rr), om1)))
        if rn == r:
            break
        r = rn
    A = W.add(A0, Gam, r)
    curv = W.add(W.d(A), W.div_hbar(W.mul(A, A)))
    curv = W.trunc(curv, cap - 1)
    defects = {d: el for d, el in W.by_degree(W.y_dependent(curv)).items()}
    res = FedosovResult(W, Gam, r, A, curv, defects, it, N)
    if defects:
        raise FedosovError(f"non-central Weyl curvature in degree {min(defects)}", min(defects))
    return res
