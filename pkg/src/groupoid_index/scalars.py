"""Coefficient rings shared by every module.

Three layers live here:

* :class:`Cx` -- exact complex rationals (Gaussian rationals) and
  :class:`ScalarField`, which picks between exact and binary64 arithmetic.
* :class:`Poly` over a :class:`PolyRing` -- sparse multivariate polynomials whose
  variables are of three kinds: ordinary polynomial coordinates (degree
  capped, a jet quotient), torus angles stored as Fourier modes ``z = e^{i theta}``
  (frequency cutoff, truncation is flagged), and the formal parameter ``hbar``
  (order capped, truncation is silent).
* :class:`HbarSeries` -- truncated Laurent series in hbar with coefficients in
  any of the above rings.

The torus measure is the un-normalized Lebesgue measure, so ``integrate_torus``
returns ``(2 pi)^n`` times the zero mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence


class RingMismatchError(ValueError):
    """Raised when operands live in incompatible rings."""


# ---------------------------------------------------------------------------
# exact complex rationals


class Cx:
    """Exact complex number with rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        if isinstance(re, Cx):
            re, im = re.re, re.im + Fraction(im)
        self.re = re if type(re) is Fraction else Fraction(re)
        self.im = im if type(im) is Fraction else Fraction(im)

    @staticmethod
    def coerce(v) -> "Cx":
        if isinstance(v, Cx):
            return v
        if isinstance(v, (int, Fraction, Rational)):
            return Cx(v)
        if isinstance(v, complex):
            raise TypeError("binary64 complex value in exact mode")
        if isinstance(v, float):
            raise TypeError("binary64 float value in exact mode")
        raise TypeError(f"cannot coerce {type(v).__name__} to Cx")

    def __add__(self, o):
        if not isinstance(o, Cx):
            if isinstance(o, (int, Fraction)):
                return Cx(self.re + o, self.im)
            return NotImplemented
        return Cx(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return Cx(-self.re, -self.im)

    def __sub__(self, o):
        if not isinstance(o, Cx):
            if isinstance(o, (int, Fraction)):
                return Cx(self.re - o, self.im)
            return NotImplemented
        return Cx(self.re - o.re, self.im - o.im)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Cx):
            if isinstance(o, (int, Fraction)):
                return Cx(self.re * o, self.im * o)
            return NotImplemented
        return Cx(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return Cx(self.re, -self.im)

    def abs2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __truediv__(self, o):
        if not isinstance(o, Cx):
            if isinstance(o, (int, Fraction)):
                return Cx(self.re / o, self.im / o)
            return NotImplemented
        n = o.abs2()
        if n == 0:
            raise ZeroDivisionError("Cx division by zero")
        return self * Cx(o.re / n, -o.im / n)

    def __rtruediv__(self, o):
        return Cx.coerce(o) / self

    def __pow__(self, k: int):
        if k < 0:
            return Cx(1) / (self ** (-k))
        out, base = Cx(1), self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, o):
        if isinstance(o, Cx):
            return self.re == o.re and self.im == o.im
        if isinstance(o, (int, Fraction)):
            return self.im == 0 and self.re == o
        if isinstance(o, (float, complex)):
            return complex(self) == o
        return NotImplemented

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if self.im == 0:
            return f"Cx({self.re})"
        return f"Cx({self.re}, {self.im})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}i"
        return f"({self.re}{'+' if self.im > 0 else '-'}{abs(self.im)}i)"


I = Cx(0, 1)


@dataclass(frozen=True)
class ScalarField:
    """Base field: exact Gaussian rationals or binary64 complex numbers.

    Exact mode compares with ``==``; float mode compares within ``tol``.
    """

    mode: str = "exact"
    tol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("exact", "float"):
            raise ValueError(f"unknown scalar mode {self.mode!r}")

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def coerce(self, v):
        if self.exact:
            return Cx.coerce(v)
        return complex(v)

    def zero(self):
        return Cx(0) if self.exact else 0j

    def one(self):
        return Cx(1) if self.exact else 1 + 0j

    def i(self):
        return Cx(0, 1) if self.exact else 1j

    def is_zero(self, v) -> bool:
        if self.exact:
            return not v
        return abs(v) <= self.tol

    def equal(self, a, b) -> bool:
        return self.is_zero(a - b)


EXACT = ScalarField("exact")
FLOAT = ScalarField("float")


def field_of(mode: str | ScalarField) -> ScalarField:
    if isinstance(mode, ScalarField):
        return mode
    return EXACT if mode == "exact" else ScalarField("float")


# ---------------------------------------------------------------------------
# polynomial / Fourier rings

POLY, FOURIER, HBAR = "poly", "fourier", "hbar"


@dataclass(frozen=True)
class PolyRing:
    """Variable layout and truncation rules of a :class:`Poly`.

    Args:
        names: variable names.
        kinds: one of ``"poly"``, ``"fourier"``, ``"hbar"`` per variable.
        degree_cap: cap on the total degree in the ``poly`` variables
            (``None`` means uncapped).
        cutoff: Fourier frequency cutoff ``K``; modes with ``|k| > K`` are dropped
            and the result is flagged as truncated.
        hbar_order: highest kept power of hbar.
        field: scalar field of the coefficients.
    """

    names: tuple
    kinds: tuple
    degree_cap: int | None = None
    cutoff: int | None = None
    hbar_order: int | None = None
    field: ScalarField = EXACT

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise ValueError("names and kinds differ in length")
        for k in self.kinds:
            if k not in (POLY, FOURIER, HBAR):
                raise ValueError(f"unknown variable kind {k!r}")

    @property
    def nvars(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no variable {name!r} in ring {self.names}") from None

    def gen(self, name: str) -> "Poly":
        e = [0] * self.nvars
        e[self.index(name)] = 1
        return Poly(self, {tuple(e): self.field.one()})

    def gens(self):
        return [self.gen(n) for n in self.names]

    def const(self, c) -> "Poly":
        return Poly(self, {(0,) * self.nvars: c})

    def zero(self) -> "Poly":
        return Poly(self, {})

    def one(self) -> "Poly":
        return self.const(1)

    def mode(self, k: Sequence[int], coeff=1) -> "Poly":
        """Monomial with the given exponent vector (Fourier exponents may be negative)."""
        return Poly(self, {tuple(k): coeff})

    def with_field(self, field: ScalarField) -> "PolyRing":
        return PolyRing(self.names, self.kinds, self.degree_cap, self.cutoff, self.hbar_order, field)

    def _poly_idx(self):
        return [i for i, k in enumerate(self.kinds) if k == POLY]

    def _fourier_idx(self):
        return [i for i, k in enumerate(self.kinds) if k == FOURIER]

    def _hbar_idx(self):
        return [i for i, k in enumerate(self.kinds) if k == HBAR]

    def keep(self, e) -> tuple[bool, bool]:
        """Return ``(kept, flagged)`` for exponent ``e``.

        ``flagged`` is true when the monomial is dropped by the Fourier cutoff.
        """
        if self.degree_cap is not None:
            if sum(e[i] for i in self._pidx) > self.degree_cap:
                return False, False
        if self.hbar_order is not None:
            for i in self._hidx:
                if e[i] > self.hbar_order:
                    return False, False
        if self.cutoff is not None:
            for i in self._fidx:
                if abs(e[i]) > self.cutoff:
                    return False, True
        return True, False

    # cached index lists (dataclass is frozen, so compute lazily)
    @property
    def _pidx(self):
        return _cached(self, "_p", self._poly_idx)

    @property
    def _fidx(self):
        return _cached(self, "_f", self._fourier_idx)

    @property
    def _hidx(self):
        return _cached(self, "_h", self._hbar_idx)


_IDX_CACHE: dict = {}


def _cached(ring, tag, fn):
    key = (ring.kinds, tag)
    v = _IDX_CACHE.get(key)
    if v is None:
        v = fn()
        _IDX_CACHE[key] = v
    return v


def chart_ring(n: int, degree_cap: int | None = None, prefix: str = "x", field=EXACT) -> PolyRing:
    """Polynomial ring on an n-dimensional chart."""
    return PolyRing(tuple(f"{prefix}{i + 1}" for i in range(n)), (POLY,) * n, degree_cap=degree_cap, field=field)


def torus_ring(n: int, cutoff: int, prefix: str = "t", field=EXACT) -> PolyRing:
    """Truncated Fourier ring on the n-torus."""
    return PolyRing(tuple(f"{prefix}{i + 1}" for i in range(n)), (FOURIER,) * n, cutoff=cutoff, field=field)


class Poly:
    """Sparse element of a :class:`PolyRing`.

    ``terms`` maps exponent tuples to coefficients in the ring's scalar field.
    For Fourier variables the exponent is the wave number. ``truncated`` records
    whether a Fourier cutoff discarded a nonzero coefficient while building it.
    """

    __slots__ = ("ring", "terms", "truncated")

    def __init__(self, ring: PolyRing, terms: Mapping | None = None, truncated: bool = False, *, _raw=False):
        self.ring = ring
        self.truncated = truncated
        if _raw:
            self.terms = terms
            return
        f = ring.field
        out = {}
        for e, c in (terms or {}).items():
            c = f.coerce(c)
            if not c:
                continue
            kept, flag = ring.keep(e)
            if kept:
                out[tuple(e)] = out.get(tuple(e), f.zero()) + c
            elif flag:
                self.truncated = True
        self.terms = {e: c for e, c in out.items() if c}

    # -- construction helpers
    def _new(self, terms, truncated=False):
        return Poly(self.ring, terms, truncated or self.truncated, _raw=True)

    def _check(self, other):
        if isinstance(other, Poly):
            if other.ring != self.ring:
                raise RingMismatchError(f"ring mismatch: {self.ring.names} vs {other.ring.names}")
            return other
        return self.ring.const(other)

    # -- arithmetic
    def __add__(self, other):
        other = self._check(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            v = t.get(e)
            v = c if v is None else v + c
            if v:
                t[e] = v
            else:
                t.pop(e, None)
        return Poly(self.ring, t, self.truncated or other.truncated, _raw=True)

    __radd__ = __add__

    def __neg__(self):
        return self._new({e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._check(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            c = self.ring.field.coerce(other)
            if not c:
                return self._new({})
            return self._new({e: v * c for e, v in self.terms.items()})
        other = self._check(other)
        ring = self.ring
        out: dict = {}
        flag = self.truncated or other.truncated
        keep = ring.keep
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                kept, f = keep(e)
                if not kept:
                    flag = flag or f
                    continue
                v = out.get(e)
                out[e] = c1 * c2 if v is None else v + c1 * c2
        out = {e: c for e, c in out.items() if c}
        if flag and not self.truncated and not other.truncated:
            # flag only if a dropped product was genuinely nonzero
            flag = _fourier_dropped(self, other)
        return Poly(ring, out, flag, _raw=True)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = self.ring.one()
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, Poly):
            if other.ring != self.ring:
                return False
            return self.terms == other.terms
        return self == self.ring.const(other)

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self, tol: float | None = None) -> bool:
        if self.ring.field.exact:
            return not self.terms
        tol = self.ring.field.tol if tol is None else tol
        return all(abs(c) <= tol for c in self.terms.values())

    def max_abs(self) -> float:
        return max((abs(complex(c)) for c in self.terms.values()), default=0.0)

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mon = "*".join(_mono(n, k, p) for n, k, p in zip(self.ring.names, self.ring.kinds, e) if p)
            parts.append(f"{c}" + (f"*{mon}" if mon else ""))
        return " + ".join(parts)

    # -- calculus
    def diff(self, name: str | int) -> "Poly":
        """Partial derivative; for a Fourier variable, d/dtheta of ``z^k`` is ``i k z^k``."""
        i = name if isinstance(name, int) else self.ring.index(name)
        kind = self.ring.kinds[i]
        f = self.ring.field
        out = {}
        for e, c in self.terms.items():
            p = e[i]
            if p == 0:
                continue
            if kind == FOURIER:
                out[e] = c * f.i() * p
            else:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = c * p
        return Poly(self.ring, out, self.truncated, _raw=True)

    def coeff(self, e) -> object:
        return self.terms.get(tuple(e), self.ring.field.zero())

    def constant_term(self):
        return self.coeff((0,) * self.ring.nvars)

    def degree(self, names: Iterable[str] | None = None) -> int:
        idx = self.ring._pidx if names is None else [self.ring.index(n) for n in names]
        return max((sum(e[i] for i in idx) for e in self.terms), default=-1)

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def map_coeffs(self, fn) -> "Poly":
        return Poly(self.ring, {e: fn(c) for e, c in self.terms.items()}, self.truncated)

    def conjugate(self) -> "Poly":
        """Complex conjugate as a function (Fourier modes flip sign)."""
        fidx = self.ring._fidx
        out = {}
        for e, c in self.terms.items():
            e2 = list(e)
            for i in fidx:
                e2[i] = -e2[i]
            out[tuple(e2)] = c.conjugate()
        return Poly(self.ring, out, self.truncated, _raw=True)

    def evaluate(self, point: Mapping[str, complex] | Sequence) -> complex:
        """Numerical value; Fourier variables take the angle theta."""
        if isinstance(point, Mapping):
            vals = [point.get(n, 0.0) for n in self.ring.names]
        else:
            vals = list(point)
        total = 0j
        for e, c in self.terms.items():
            m = complex(c)
            for v, k, p in zip(vals, self.ring.kinds, e):
                if not p:
                    continue
                if k == FOURIER:
                    m *= complex(math.cos(p * v), math.sin(p * v))
                else:
                    m *= v**p
            total += m
        return total

    def to_float(self) -> "Poly":
        ring = self.ring.with_field(FLOAT)
        return Poly(ring, {e: complex(c) for e, c in self.terms.items()}, self.truncated)

    def homogeneous_part(self, names: Sequence[str], degree: int) -> "Poly":
        idx = [self.ring.index(n) for n in names]
        return self._new({e: c for e, c in self.terms.items() if sum(e[i] for i in idx) == degree})

    def substitute_degree(self, name: str, power: int) -> "Poly":
        """Coefficient of ``name**power`` (as an element of the same ring)."""
        i = self.ring.index(name)
        out = {}
        for e, c in self.terms.items():
            if e[i] == power:
                e2 = list(e)
                e2[i] = 0
                out[tuple(e2)] = c
        return self._new(out)


def _mono(n, k, p):
    if k == FOURIER:
        return f"e^({p}i{n})"
    return n if p == 1 else f"{n}^{p}"


def _fourier_dropped(a: Poly, b: Poly) -> bool:
    """True iff the full (uncut) Fourier product has a nonzero mode beyond the cutoff."""
    ring = a.ring
    full = {}
    fidx = ring._fidx
    K = ring.cutoff
    for e1, c1 in a.terms.items():
        for e2, c2 in b.terms.items():
            e = tuple(x + y for x, y in zip(e1, e2))
            if any(abs(e[i]) > K for i in fidx):
                full[e] = full.get(e, 0) + c1 * c2
    return any(bool(v) if ring.field.exact else abs(v) > ring.field.tol for v in full.values())


# ---------------------------------------------------------------------------
# torus functions


def torus_function(n: int, cutoff: int, coeffs: Mapping[tuple, object], field=EXACT) -> Poly:
    """Build a TorusFunction from a map wave-vector -> coefficient."""
    ring = torus_ring(n, cutoff, field=field)
    p = Poly(ring, {tuple(k): v for k, v in coeffs.items()})
    return p


def cos_mode(ring: PolyRing, var: str, k: int = 1) -> Poly:
    e = [0] * ring.nvars
    i = ring.index(var)
    e[i] = k
    ep = tuple(e)
    e[i] = -k
    em = tuple(e)
    half = Fraction(1, 2) if ring.field.exact else 0.5
    return Poly(ring, {ep: half, em: half})


def sin_mode(ring: PolyRing, var: str, k: int = 1) -> Poly:
    e = [0] * ring.nvars
    i = ring.index(var)
    e[i] = k
    ep = tuple(e)
    e[i] = -k
    em = tuple(e)
    f = ring.field
    h = Cx(0, Fraction(-1, 2)) if f.exact else -0.5j
    return Poly(ring, {ep: h, em: -h})


def fourier_mul(f: Poly, g: Poly) -> Poly:
    """Product of two TorusFunctions, truncated back to the cutoff (flagged)."""
    if f.ring.nvars != g.ring.nvars:
        raise RingMismatchError("torus dimension mismatch")
    if f.ring.cutoff != g.ring.cutoff:
        raise RingMismatchError("cutoff mismatch")
    return f * g


@dataclass(frozen=True)
class PiScaled:
    """Exact value ``coeff * (2 pi)^power``; only produced by torus integration."""

    coeff: object
    power: int

    def __complex__(self):
        return complex(self.coeff) * (2 * math.pi) ** self.power

    def __float__(self):
        z = complex(self)
        return z.real

    def __eq__(self, other):
        if isinstance(other, PiScaled):
            if self.coeff == 0 and other.coeff == 0:
                return True
            return self.power == other.power and self.coeff == other.coeff
        if other == 0:
            return self.coeff == 0
        return NotImplemented

    def __hash__(self):
        return hash((self.coeff, self.power))


def integrate_torus(f: Poly):
    """Integral over the torus with the un-normalized measure dtheta_1 ... dtheta_n.

    Only the Fourier variables are integrated. Returns a :class:`PiScaled` in
    exact mode (when the result is a scalar) and a complex number in float mode.
    When non-Fourier variables remain, returns a :class:`Poly` in those
    variables (still in the same ring), scaled by ``(2 pi)^n`` in float mode and
    wrapped as ``(poly, n)`` in exact mode.
    """
    ring = f.ring
    fidx = ring._fidx
    n = len(fidx)
    zero_mode = {e: c for e, c in f.terms.items() if all(e[i] == 0 for i in fidx)}
    rest = [i for i in range(ring.nvars) if i not in fidx]
    if not any(any(e[i] for i in rest) for e in zero_mode):
        c0 = sum(zero_mode.values(), ring.field.zero())
        if ring.field.exact:
            return PiScaled(c0, n)
        return complex(c0) * (2 * math.pi) ** n
    p = Poly(ring, zero_mode, f.truncated, _raw=True)
    if ring.field.exact:
        return PiScaled(p, n)
    return p * ((2 * math.pi) ** n)


# ---------------------------------------------------------------------------
# hbar series


class HbarSeries:
    """Truncated Laurent series ``sum_{k=-p}^{N} c_k hbar^k``.

    Coefficients may be any ring elements supporting ``+`` and ``*`` (scalars,
    :class:`Poly`, numpy arrays). Arithmetic closes modulo ``hbar^(N+1)``.
    """

    __slots__ = ("coeffs", "order", "pole")

    def __init__(self, coeffs: Sequence, order: int | None = None, pole: int = 0):
        coeffs = list(coeffs)
        if order is None:
            order = len(coeffs) - 1 - pole
        if order < -pole:
            raise ValueError("truncation order below pole order")
        size = order + pole + 1
        if len(coeffs) > size:
            coeffs = coeffs[:size]
        while len(coeffs) < size:
            coeffs.append(_zero_like(coeffs[0] if coeffs else 0))
        self.coeffs = coeffs
        self.order = order
        self.pole = pole

    def __getitem__(self, k: int):
        """Coefficient of ``hbar^k``."""
        j = k + self.pole
        if 0 <= j < len(self.coeffs):
            return self.coeffs[j]
        return _zero_like(self.coeffs[0])

    def _ring_of(self):
        return type(self.coeffs[0]) if self.coeffs else None

    def __add__(self, other):
        if not isinstance(other, HbarSeries):
            other = HbarSeries([other], order=self.order)
        _check_series(self, other)
        pole = max(self.pole, other.pole)
        order = min(self.order, other.order)
        return HbarSeries([self[k] + other[k] for k in range(-pole, order + 1)], order, pole)

    __radd__ = __add__

    def __neg__(self):
        return HbarSeries([-c for c in self.coeffs], self.order, self.pole)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, HbarSeries):
            return HbarSeries([c * other for c in self.coeffs], self.order, self.pole)
        return series_mul(self, other)

    def __rmul__(self, other):
        return HbarSeries([other * c for c in self.coeffs], self.order, self.pole)

    def __eq__(self, other):
        if not isinstance(other, HbarSeries):
            return NotImplemented
        lo = -max(self.pole, other.pole)
        hi = min(self.order, other.order)
        return all(_eq(self[k], other[k]) for k in range(lo, hi + 1))

    def normalized(self) -> "HbarSeries":
        """Drop vanishing leading pole coefficients."""
        p = self.pole
        j = 0
        while p > 0 and _iszero(self.coeffs[j]):
            p -= 1
            j += 1
        return HbarSeries(self.coeffs[j:], self.order, p)

    def evaluate(self, hbar: complex) -> complex:
        return sum(complex(self[k]) * hbar**k for k in range(-self.pole, self.order + 1))

    def __repr__(self):
        return f"HbarSeries(pole={self.pole}, order={self.order}, coeffs={self.coeffs})"


def _zero_like(c):
    try:
        return c * 0
    except TypeError:
        return 0


def _iszero(c) -> bool:
    if isinstance(c, Poly):
        return not c
    try:
        return c == 0
    except Exception:
        return False


def _eq(a, b) -> bool:
    d = a - b
    return _iszero(d) if not isinstance(d, Poly) else not d


def _check_series(a: HbarSeries, b: HbarSeries):
    ta, tb = a._ring_of(), b._ring_of()
    num = (int, Fraction, Cx)
    if ta in num and tb in num:
        return
    if ta is not None and tb is not None and ta is not tb:
        if not ({ta, tb} <= {int, Fraction, Cx, float, complex}):
            raise RingMismatchError(f"coefficient ring mismatch: {ta.__name__} vs {tb.__name__}")
        if (ta in num) != (tb in num):
            raise RingMismatchError("exact and binary64 coefficients mixed")
    if isinstance(a.coeffs[0], Poly) and isinstance(b.coeffs[0], Poly):
        if a.coeffs[0].ring != b.coeffs[0].ring:
            raise RingMismatchError("polynomial ring mismatch")


def series_mul(a: HbarSeries, b: HbarSeries) -> HbarSeries:
    """Cauchy product truncated at ``hbar^(min(Na, Nb) + 1)``; pole orders add."""
    _check_series(a, b)
    pole = a.pole + b.pole
    order = min(a.order, b.order)
    zero = _zero_like(a.coeffs[0]) * _zero_like(b.coeffs[0]) if a.coeffs and b.coeffs else 0
    out = []
    for k in range(-pole, order + 1):
        s = zero
        for i in range(-a.pole, a.order + 1):
            j = k - i
            if -b.pole <= j <= b.order:
                s = s + a[i] * b[j]
        out.append(s)
    return HbarSeries(out, order, pole).normalized()
