"""Finite groupoids: nerve, cochains, convolution algebra, trace, characteristic map, pairing.

Composition is written left to right: ``g1 g2`` is defined when ``t(g1) = s(g2)``,
with ``s(g1 g2) = s(g1)`` and ``t(g1 g2) = t(g2)``. In degree 1 the face maps are
``d_0 = s`` and ``d_1 = t``, so the degree-0 coboundary is ``s*phi - t*phi``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .scalars import EXACT, ScalarField


class GroupoidError(ValueError):
    """Malformed groupoid data or mismatched inputs."""


class FiniteGroupoid:
    """Finite groupoid with arrows indexed ``0..m-1``.

    Args:
        objects: object labels.
        source, target: per-arrow object indices.
        compose: dict ``(g1, g2) -> g`` over all composable pairs.
        names: optional arrow labels.
    """

    def __init__(self, objects, source, target, compose, names=None, validate=True):
        self.objects = list(objects)
        self.s = list(source)
        self.t = list(target)
        self.comp = dict(compose)
        self.names = list(names) if names is not None else [str(i) for i in range(len(self.s))]
        n = len(self.objects)
        self.unit = [None] * n
        for g in range(len(self.s)):
            if self.s[g] == self.t[g] and all(
                self.comp.get((g, h)) == h for h in range(len(self.s)) if self.s[h] == self.s[g]
            ):
                self.unit[self.s[g]] = g
        if any(u is None for u in self.unit):
            raise GroupoidError("missing unit arrow")
        self.inv = [None] * len(self.s)
        for g in range(len(self.s)):
            for h in range(len(self.s)):
                if self.s[h] == self.t[g] and self.comp.get((g, h)) == self.unit[self.s[g]]:
                    self.inv[g] = h
                    break
        if any(i is None for i in self.inv):
            raise GroupoidError("missing inverse")
        self._into = [[g for g in range(len(self.s)) if self.t[g] == x] for x in range(n)]
        self._out = [[g for g in range(len(self.s)) if self.s[g] == x] for x in range(n)]
        self._nerve: dict = {}
        if validate:
            errs = self.validate()
            if errs:
                raise GroupoidError("; ".join(errs[:5]))

    @property
    def n_arrows(self) -> int:
        return len(self.s)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    def arrows(self):
        return range(len(self.s))

    def mul(self, g1: int, g2: int) -> int:
        try:
            return self.comp[(g1, g2)]
        except KeyError:
            raise GroupoidError(f"arrows {g1}, {g2} are not composable") from None

    def product(self, gs) -> int:
        out = gs[0]
        for g in gs[1:]:
            out = self.mul(out, g)
        return out

    def is_unit(self, g: int) -> bool:
        return self.unit[self.s[g]] == g

    def arrows_into(self, x: int) -> list:
        return self._into[x]

    def arrows_from(self, x: int) -> list:
        return self._out[x]

    def validate(self) -> list:
        errs = []
        m = self.n_arrows
        for g1 in range(m):
            for g2 in self._out[self.t[g1]]:
                g = self.comp.get((g1, g2))
                if g is None:
                    errs.append(f"missing composite ({g1},{g2})")
                    continue
                if self.s[g] != self.s[g1] or self.t[g] != self.t[g2]:
                    errs.append(f"composite ({g1},{g2}) has wrong endpoints")
        for (g1, g2) in self.comp:
            if self.t[g1] != self.s[g2]:
                errs.append(f"non-composable pair ({g1},{g2}) in table")
        if errs:
            return errs
        for g1 in range(m):
            for g2 in self._out[self.t[g1]]:
                for g3 in self._out[self.t[g2]]:
                    if self.mul(self.mul(g1, g2), g3) != self.mul(g1, self.mul(g2, g3)):
                        errs.append(f"associativity fails on ({g1},{g2},{g3})")
        for g in range(m):
            if self.mul(self.unit[self.s[g]], g) != g or self.mul(g, self.unit[self.t[g]]) != g:
                errs.append(f"unit law fails at {g}")
            if self.mul(self.inv[g], g) != self.unit[self.t[g]]:
                errs.append(f"inverse law fails at {g}")
        return errs

    def nerve(self, k: int) -> list:
        """Composable k-tuples; degree 0 lists objects as 1-tuples."""
        if k in self._nerve:
            return self._nerve[k]
        if k == 0:
            out = [(x,) for x in range(self.n_objects)]
        elif k == 1:
            out = [(g,) for g in self.arrows()]
        else:
            out = [T + (g,) for T in self.nerve(k - 1) for g in self._out[self.t[T[-1]]]]
        self._nerve[k] = out
        return out


def pair_groupoid(n: int, labels=None) -> FiniteGroupoid:
    """Pair groupoid on ``n`` objects; arrow ``x*n + y`` is ``x -> y``."""
    objs = list(labels) if labels is not None else list(range(n))
    s, t, names = [], [], []
    for x in range(n):
        for y in range(n):
            s.append(x)
            t.append(y)
            names.append(f"{x}->{y}")
    comp = {(x * n + y, y * n + z): x * n + z for x in range(n) for y in range(n) for z in range(n)}
    return FiniteGroupoid(objs, s, t, comp, names, validate=n <= 6)


def group_groupoid(table) -> FiniteGroupoid:
    """One-object groupoid from a group multiplication table ``table[a][b] = ab``."""
    m = len(table)
    comp = {(a, b): table[a][b] for a in range(m) for b in range(m)}
    return FiniteGroupoid([0], [0] * m, [0] * m, comp, [f"g{a}" for a in range(m)])


def cyclic_group(m: int) -> FiniteGroupoid:
    return group_groupoid([[(a + b) % m for b in range(m)] for a in range(m)])


def symmetric_group3() -> FiniteGroupoid:
    perms = list(itertools.permutations(range(3)))
    idx = {p: i for i, p in enumerate(perms)}
    # left-to-right composition: (p q)(i) = q(p(i))
    table = [[idx[tuple(q[p[i]] for i in range(3))] for q in perms] for p in perms]
    return group_groupoid(table)


def action_groupoid(n_points: int, group_table, act) -> FiniteGroupoid:
    """Right action groupoid: arrow ``(x, a)`` goes ``x -> act(x, a)``."""
    m = len(group_table)
    arrows = [(x, a) for x in range(n_points) for a in range(m)]
    idx = {g: i for i, g in enumerate(arrows)}
    s = [x for x, _ in arrows]
    t = [act(x, a) for x, a in arrows]
    comp = {}
    for (x, a) in arrows:
        y = act(x, a)
        for b in range(m):
            comp[(idx[(x, a)], idx[(y, b)])] = idx[(x, group_table[a][b])]
    return FiniteGroupoid(list(range(n_points)), s, t, comp, [f"({x},{a})" for x, a in arrows])


def disjoint_union(G: FiniteGroupoid, H: FiniteGroupoid) -> FiniteGroupoid:
    no, na = G.n_objects, G.n_arrows
    comp = dict(G.comp)
    comp.update({(a + na, b + na): c + na for (a, b), c in H.comp.items()})
    return FiniteGroupoid(
        G.objects + [("H", o) for o in H.objects],
        G.s + [x + no for x in H.s],
        G.t + [x + no for x in H.t],
        comp,
        G.names + ["H" + n for n in H.names],
    )


# ---------------------------------------------------------------------------
# nerve and cochains


def faces(G: FiniteGroupoid, T: tuple, i: int) -> tuple:
    """Face map ``d_i: G_k -> G_{k-1}``; on G_1, ``d_0 = s`` and ``d_1 = t`` (as 1-tuples of objects)."""
    k = len(T)
    if not 0 <= i <= k or k == 0:
        raise GroupoidError(f"face index {i} out of range for degree {k}")
    if k == 1:
        return (G.s[T[0]],) if i == 0 else (G.t[T[0]],)
    if i == 0:
        return T[1:]
    if i == k:
        return T[:-1]
    return T[: i - 1] + (G.mul(T[i - 1], T[i]),) + T[i + 1:]


@dataclass
class GroupoidCochain:
    """Degree-k cochain: value per nerve tuple (missing tuples read as 0)."""

    G: FiniteGroupoid
    degree: int
    values: dict
    field: ScalarField = EXACT

    def __call__(self, *T):
        if len(T) == 1 and isinstance(T[0], tuple):
            T = T[0]
        return self.values.get(tuple(T), self.field.zero())

    def _combine(self, other, fn):
        if other.G is not self.G or other.degree != self.degree:
            raise GroupoidError("cochain mismatch")
        keys = set(self.values) | set(other.values)
        return GroupoidCochain(self.G, self.degree, {k: fn(self(k), other(k)) for k in keys}, self.field)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def scale(self, c):
        return GroupoidCochain(self.G, self.degree, {k: v * c for k, v in self.values.items()}, self.field)

    def is_zero(self) -> bool:
        return all(self.field.is_zero(v) for v in self.values.values())

    def __eq__(self, other):
        if not isinstance(other, GroupoidCochain):
            return NotImplemented
        return (self - other).is_zero()


def cochain_from_function(G: FiniteGroupoid, k: int, fn, field=EXACT) -> GroupoidCochain:
    return GroupoidCochain(G, k, {T: field.coerce(fn(*T)) for T in G.nerve(k)}, field)


def random_cochain(G: FiniteGroupoid, k: int, rng, field=EXACT, lo=-5, hi=5) -> GroupoidCochain:
    vals = {}
    for T in G.nerve(k):
        if field.exact:
            vals[T] = field.coerce(Fraction(int(rng.integers(lo, hi + 1)), int(rng.integers(1, 4))))
        else:
            vals[T] = complex(rng.normal(), rng.normal())
    return GroupoidCochain(G, k, vals, field)


def diff_d(phi: GroupoidCochain) -> GroupoidCochain:
    """Simplicial coboundary ``sum_i (-1)^i phi o d_i`` (alternating weight)."""
    G, k = phi.G, phi.degree
    out = {}
    for T in G.nerve(k + 1):
        acc = phi.field.zero()
        for i in range(k + 2):
            v = phi(faces(G, T, i))
            acc = acc + v if i % 2 == 0 else acc - v
        out[T] = acc
    return GroupoidCochain(G, k + 1, out, phi.field)


def cyclic_tau(phi: GroupoidCochain) -> GroupoidCochain:
    """``tau phi(g_1..g_k) = phi((g_1...g_k)^-1, g_1, ..., g_{k-1})``."""
    G, k = phi.G, phi.degree
    if k < 1:
        raise GroupoidError("cyclic operator needs degree >= 1")
    out = {}
    for T in G.nerve(k):
        out[T] = phi((G.inv[G.product(T)],) + T[:-1])
    return GroupoidCochain(G, k, out, phi.field)


# Batched integer path: cochains stacked as columns of an int64 array indexed by G.nerve(k).
# Exact as long as entries stay far below 2**63; used for bulk identity checks.


def _nerve_index(G: FiniteGroupoid, k: int) -> dict:
    return {T: i for i, T in enumerate(G.nerve(k))}


def face_table(G: FiniteGroupoid, k: int) -> np.ndarray:
    """``F[r, i]`` = position in ``G.nerve(k - 1)`` of face ``d_i`` of ``G.nerve(k)[r]``; ``k >= 1``."""
    idx = _nerve_index(G, k - 1)
    return np.array([[idx[faces(G, T, i)] for i in range(k + 1)] for T in G.nerve(k)], dtype=np.intp).reshape(-1, k + 1)


def tau_table(G: FiniteGroupoid, k: int) -> np.ndarray:
    """Permutation ``p`` with ``(tau phi)[r] = phi[p[r]]`` on ``G.nerve(k)``; ``k >= 1``."""
    if k < 1:
        raise GroupoidError("cyclic operator needs degree >= 1")
    idx = _nerve_index(G, k)
    return np.array([idx[(G.inv[G.product(T)],) + T[:-1]] for T in G.nerve(k)], dtype=np.intp)


def diff_d_array(G: FiniteGroupoid, k: int, X: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
    """Coboundary of integer cochains stacked as the columns of ``X`` (rows follow ``G.nerve(k)``)."""
    X = np.asarray(X)
    if X.dtype.kind not in "iu":
        raise GroupoidError("batched coboundary needs an integer array; clear denominators first")
    F = face_table(G, k + 1) if table is None else table
    out = np.zeros((F.shape[0],) + X.shape[1:], dtype=np.int64)
    for i in range(F.shape[1]):
        out += X[F[:, i]] if i % 2 == 0 else -X[F[:, i]]
    return out


def modular_function(G: FiniteGroupoid, omega) -> GroupoidCochain:
    """``delta(g) = Omega(s g) / Omega(t g)`` as an exact degree-1 cochain."""
    om = _weights(G, omega)
    if any(not (w > 0) for w in om):
        raise GroupoidError("density weights must be positive")
    return GroupoidCochain(G, 1, {(g,): EXACT.coerce(Fraction(om[G.s[g]]) / Fraction(om[G.t[g]])) for g in G.arrows()})


def modular_log_cocycle_check(G: FiniteGroupoid, omega) -> list:
    """Composable pairs where ``delta(g1 g2) != delta(g1) delta(g2)``."""
    d = modular_function(G, omega)
    return [T for T in G.nerve(2) if d(G.mul(*T)) != d(T[0]) * d(T[1])]


def modular_witness(G: FiniteGroupoid, omega) -> list:
    """``eta`` with ``delta(g) = eta(s g) / eta(t g)``; for this delta, ``eta = Omega``."""
    return [EXACT.coerce(Fraction(w)) for w in _weights(G, omega)]


def _weights(G, omega):
    if omega is None:
        return [1] * G.n_objects
    if isinstance(omega, (int, Fraction)):
        return [omega] * G.n_objects
    om = list(omega)
    if len(om) != G.n_objects:
        raise GroupoidError("one density weight per object required")
    return om


# ---------------------------------------------------------------------------
# convolution algebra


@dataclass
class ConvolutionElement:
    """Function on arrows; ``support`` (optional) must contain every nonzero arrow."""

    G: FiniteGroupoid
    values: dict
    field: ScalarField = EXACT
    support: frozenset | None = None

    def __post_init__(self):
        self.values = {g: self.field.coerce(v) for g, v in self.values.items() if not self.field.is_zero(self.field.coerce(v))}
        if self.support is not None:
            bad = set(self.values) - set(self.support)
            if bad:
                raise GroupoidError(f"values outside declared support: {sorted(bad)}")

    def __call__(self, g):
        return self.values.get(g, self.field.zero())

    def nonzero_support(self) -> frozenset:
        return frozenset(self.values)

    def _check(self, other):
        if other.G is not self.G:
            raise GroupoidError("groupoid mismatch")

    def __add__(self, other):
        self._check(other)
        keys = set(self.values) | set(other.values)
        return ConvolutionElement(self.G, {g: self(g) + other(g) for g in keys}, self.field)

    def __sub__(self, other):
        return self + other.scale(-1)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, c):
        c = self.field.coerce(c)
        return ConvolutionElement(self.G, {g: v * c for g, v in self.values.items()}, self.field)

    def __mul__(self, other):
        if isinstance(other, ConvolutionElement):
            return convolve(self, other)
        return self.scale(other)

    def pointwise(self, fn) -> "ConvolutionElement":
        """``(phi . a)(g) = phi(g) a(g)`` for a function ``phi`` on arrows."""
        return ConvolutionElement(self.G, {g: v * self.field.coerce(fn(g)) for g, v in self.values.items()}, self.field)

    def adjoint(self) -> "ConvolutionElement":
        """``a*(g) = conj(a(g^-1))``."""
        G = self.G
        return ConvolutionElement(G, {G.inv[g]: _conj(v) for g, v in self.values.items()}, self.field)

    def is_zero(self) -> bool:
        return not self.values

    def __eq__(self, other):
        if not isinstance(other, ConvolutionElement):
            return NotImplemented
        d = self - other
        return all(self.field.is_zero(v) for v in d.values.values())


def _conj(v):
    return v.conjugate() if hasattr(v, "conjugate") else v


def delta_element(G: FiniteGroupoid, g: int, c=1, field=EXACT) -> ConvolutionElement:
    return ConvolutionElement(G, {g: c}, field)


def unit_element(G: FiniteGroupoid, field=EXACT) -> ConvolutionElement:
    return ConvolutionElement(G, {u: 1 for u in G.unit}, field)


def convolve(f1: ConvolutionElement, f2: ConvolutionElement) -> ConvolutionElement:
    """``(f1 * f2)(g) = sum_{h: t(h) = t(g)} f1(g h^-1) f2(h)``."""
    f1._check(f2)
    G = f1.G
    out: dict = {}
    # enumerate pairs (a, h) with f1(a) f2(h) != 0 and a composable with h
    for a, va in f1.values.items():
        for h in G.arrows_from(G.t[a]):
            vh = f2.values.get(h)
            if vh is None:
                continue
            g = G.mul(a, h)
            out[g] = out.get(g, f1.field.zero()) + va * vh
    return ConvolutionElement(G, out, f1.field)


def support_product(G: FiniteGroupoid, U, V) -> frozenset:
    """``{g1 g2 : g1 in U, g2 in V composable}``."""
    V = set(V)
    return frozenset(G.mul(a, b) for a in U for b in G.arrows_from(G.t[a]) if b in V)


def support_boundary(G: FiniteGroupoid, U) -> frozenset:
    """``U_d = d_1(d_0^-1(U) cap d_2^-1(U))``: products of pairs with both factors in U."""
    return support_product(G, U, U)


def trace_omega(f: ConvolutionElement, omega=None):
    """``tau_Omega(f) = sum_x f(1_x) Omega(x)``."""
    G = f.G
    om = _weights(G, omega)
    acc = f.field.zero()
    for x in range(G.n_objects):
        acc = acc + f(G.unit[x]) * f.field.coerce(om[x])
    return acc


# ---------------------------------------------------------------------------
# characteristic map


def char_chi(phi, a: list, omega=None):
    """``chi_Omega(phi)(a_0, ..., a_k)`` via the sum over ``g_0 g_1 ... g_k = 1_x``.

    ``phi`` is a :class:`GroupoidCochain` of degree k or a list of k degree-1
    cochains (their tensor product).
    """
    if isinstance(phi, (list, tuple)):
        factors = list(phi)
        k = len(factors)
        if any(p.degree != 1 for p in factors):
            raise GroupoidError("tensor factors must be degree-1 cochains")
        evalf = lambda T: _prod(factors[i](T[i]) for i in range(k))
    else:
        k = phi.degree
        evalf = phi
    if len(a) != k + 1:
        raise GroupoidError(f"degree {k} cochain needs {k + 1} arguments, got {len(a)}")
    G = a[0].G
    fld = a[0].field
    om = _weights(G, omega)
    acc = fld.zero()
    if k == 0:
        return _chi0(phi, a[0], om)
    for T, v1 in _chains(G, a[1:]):
        g0 = G.inv[G.product(T)]
        v0 = a[0].values.get(g0)
        if v0 is None:
            continue
        ph = evalf(T)
        if fld.is_zero(fld.coerce(ph)):
            continue
        acc = acc + v0 * v1 * fld.coerce(ph) * fld.coerce(om[G.s[g0]])
    return acc


def _chi0(phi, a0, om):
    """Degree 0: ``tau(phi|_M . a0)``; the cochain is a function on objects."""
    G = a0.G
    fld = a0.field
    acc = fld.zero()
    for x in range(G.n_objects):
        v = a0(G.unit[x])
        if fld.is_zero(v):
            continue
        ph = phi((x,)) if isinstance(phi, GroupoidCochain) else 1
        acc = acc + v * fld.coerce(ph) * fld.coerce(om[x])
    return acc


def _prod(it):
    out = 1
    for v in it:
        out = out * v
    return out


def _chains(G: FiniteGroupoid, elems: list):
    """Composable tuples (g_1..g_k) with all ``elems[i](g_i) != 0`` and the product of values."""
    partial = [((g,), v) for g, v in elems[0].values.items()]
    for e in elems[1:]:
        nxt = []
        for T, v in partial:
            for h in G.arrows_from(G.t[T[-1]]):
                w = e.values.get(h)
                if w is not None:
                    nxt.append((T + (h,), v * w))
        partial = nxt
    return partial


def lambda_cyclic(values_fn, a: list):
    """Cyclic operator on functionals: ``(lambda f)(a_0..a_k) = f(a_k, a_0, ..., a_{k-1})`` (unsigned)."""
    return values_fn([a[-1]] + list(a[:-1]))


# ---------------------------------------------------------------------------
# homogeneous cochains


def t_fiber_tuples(G: FiniteGroupoid, k: int) -> list:
    """``(g_0, ..., g_k)`` with a common target."""
    out = []
    for x in range(G.n_objects):
        out.extend(itertools.product(G.arrows_into(x), repeat=k + 1))
    return out


def to_homogeneous(psi: GroupoidCochain) -> dict:
    """``psi_bar(g_0..g_k) = psi(g_0 g_1^-1, ..., g_{k-1} g_k^-1)``; degree 0 uses ``psi(s g_0)``."""
    G, k = psi.G, psi.degree
    out = {}
    for T in t_fiber_tuples(G, k):
        if k == 0:
            out[T] = psi((G.s[T[0]],))
        else:
            out[T] = psi(tuple(G.mul(T[i], G.inv[T[i + 1]]) for i in range(k)))
    return out


def from_homogeneous(G: FiniteGroupoid, k: int, phi: dict, field=EXACT) -> GroupoidCochain:
    """``phi_tilde(g_1..g_k) = phi(g_1...g_k, g_2...g_k, ..., g_k, 1_{t(g_k)})``.

    Raises if ``phi`` is not invariant under right translation.
    """
    bad = homogeneous_invariance_violations(G, k, phi)
    if bad:
        raise GroupoidError(f"homogeneous cochain not invariant, e.g. at {bad[0]}")
    out = {}
    for T in G.nerve(k):
        if k == 0:
            out[T] = phi.get((G.unit[T[0]],), field.zero())
            continue
        args = [G.product(T[i:]) for i in range(k)] + [G.unit[G.t[T[-1]]]]
        out[T] = phi.get(tuple(args), field.zero())
    return GroupoidCochain(G, k, out, field)


def homogeneous_invariance_violations(G: FiniteGroupoid, k: int, phi: dict) -> list:
    bad = []
    for T in t_fiber_tuples(G, k):
        x = G.t[T[0]]
        for h in G.arrows_from(x):
            T2 = tuple(G.mul(g, h) for g in T)
            if phi.get(T, 0) != phi.get(T2, 0):
                bad.append((T, h))
    return bad


def homogeneous_d(G: FiniteGroupoid, k: int, phi: dict, field=EXACT) -> dict:
    """``d = sum_i (-1)^i d_i`` with ``d_i`` omitting the i-th entry."""
    out = {}
    for T in t_fiber_tuples(G, k + 1):
        acc = field.zero()
        for i in range(k + 2):
            v = phi.get(T[:i] + T[i + 1:], field.zero())
            acc = acc + v if i % 2 == 0 else acc - v
        out[T] = acc
    return out


def homogeneous_convert(obj, direction: str, G: FiniteGroupoid | None = None, k: int | None = None, field=EXACT):
    """``direction='to_homogeneous'`` (cochain -> dict) or ``'to_inhomogeneous'`` (dict -> cochain)."""
    if direction == "to_homogeneous":
        return to_homogeneous(obj)
    if direction == "to_inhomogeneous":
        return from_homogeneous(G, k, obj, field)
    raise GroupoidError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# unitalization and idempotents


class UnitalMatrix:
    """``n x n`` matrix over the unitalization ``A+``: constant part ``e`` plus part ``p`` over A."""

    def __init__(self, G: FiniteGroupoid, const, conv, field=EXACT):
        self.G = G
        self.field = field
        self.n = len(const)
        self.e = [[field.coerce(v) for v in row] for row in const]
        self.p = [[c if c is not None else ConvolutionElement(G, {}, field) for c in row] for row in conv]

    @classmethod
    def from_conv(cls, G, conv, field=EXACT):
        n = len(conv)
        return cls(G, [[0] * n for _ in range(n)], conv, field)

    def __mul__(self, other: "UnitalMatrix") -> "UnitalMatrix":
        n, f = self.n, self.field
        E = [[sum((self.e[i][k] * other.e[k][j] for k in range(n)), f.zero()) for j in range(n)] for i in range(n)]
        P = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = ConvolutionElement(self.G, {}, f)
                for k in range(n):
                    if self.e[i][k]:
                        acc = acc + other.p[k][j].scale(self.e[i][k])
                    if other.e[k][j]:
                        acc = acc + self.p[i][k].scale(other.e[k][j])
                    if self.p[i][k].values and other.p[k][j].values:
                        acc = acc + convolve(self.p[i][k], other.p[k][j])
                row.append(acc)
            P.append(row)
        return UnitalMatrix(self.G, E, P, f)

    def __add__(self, other):
        n = self.n
        return UnitalMatrix(self.G, [[self.e[i][j] + other.e[i][j] for j in range(n)] for i in range(n)],
                            [[self.p[i][j] + other.p[i][j] for j in range(n)] for i in range(n)], self.field)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c):
        return UnitalMatrix(self.G, [[v * c for v in row] for row in self.e], [[x.scale(c) for x in row] for row in self.p], self.field)

    def shift_const(self, c):
        """Add ``c`` times the identity to the constant part."""
        n = self.n
        E = [[self.e[i][j] + (self.field.coerce(c) if i == j else 0) for j in range(n)] for i in range(n)]
        return UnitalMatrix(self.G, E, self.p, self.field)

    def __eq__(self, other):
        d = self - other
        return all(self.field.is_zero(v) for row in d.e for v in row) and all(x.is_zero() for row in d.p for x in row)

    def support(self) -> frozenset:
        out = set()
        for row in self.p:
            for x in row:
                out |= x.nonzero_support()
        return frozenset(out)


@dataclass
class LocalizedIdempotent:
    """Idempotent ``P = e + p`` over ``A+`` with ``p`` supported in the window ``U``."""

    P: UnitalMatrix
    window: frozenset | None = None

    def __post_init__(self):
        if self.window is not None:
            units = set(self.P.G.unit)
            if not units <= set(self.window):
                raise GroupoidError("window must contain all units")
            out = self.P.support() - set(self.window)
            if out:
                raise GroupoidError(f"idempotent leaks outside window at arrows {sorted(out)[:5]}")

    def residual_ok(self) -> bool:
        return self.P * self.P == self.P


def chi_matrix(phi, A: list, omega=None):
    """``chi(phi)`` on matrices over ``A+``, with ``tr`` over matrix indices.

    Constant parts: in slot 0 the formal unit acts as the convolution unit
    (with ``tau(1+) = 0`` in degree 0); in slots ``i >= 1`` it contributes 0
    (normalized extension).
    """
    k = len(A) - 1
    n = A[0].n
    G = A[0].G
    fld = A[0].field
    acc = fld.zero()
    for idx in itertools.product(range(n), repeat=k + 1):
        js = list(idx) + [idx[0]]
        args = [A[m].p[js[m]][js[m + 1]] for m in range(k + 1)]
        if all(not x.is_zero() for x in args[1:]):
            if not args[0].is_zero():
                acc = acc + char_chi(phi, args, omega)
            c0 = A[0].e[js[0]][js[1]]
            if k >= 1 and not fld.is_zero(c0):
                acc = acc + c0 * char_chi(phi, [unit_element(G, fld)] + args[1:], omega)
    return acc


def chern_connes_pair(components: dict, idem: LocalizedIdempotent, omega=None, check=True) -> dict:
    """Pairing ``sum_i (-1)^i (2i)!/i! chi(phi_2i)((P - 1/2) x P x ... x P)``.

    ``components`` maps ``2i`` to the cochain ``phi_2i`` (degree-0 entries may be
    a scalar constant). Returns ``{"total": ..., "by_degree": {2i: ...}}``.
    """
    P = idem.P
    if check and not idem.residual_ok():
        raise GroupoidError("input is not idempotent")
    G, fld = P.G, P.field
    out = {}
    total = fld.zero()
    Pm = P.shift_const(Fraction(-1, 2))
    for deg, phi in sorted(components.items()):
        if deg % 2:
            raise GroupoidError("pairing needs even-degree components")
        i = deg // 2
        if not isinstance(phi, GroupoidCochain):
            phi = GroupoidCochain(G, 0, {(x,): fld.coerce(phi) for x in range(G.n_objects)}, fld)
        if phi.degree != deg:
            raise GroupoidError(f"component {deg} has degree {phi.degree}")
        val = chi_matrix(phi, [Pm] + [P] * deg, omega)
        w = (-1) ** i * factorial(2 * i) // factorial(i)
        out[deg] = val * w
        total = total + out[deg]
    return {"total": total, "by_degree": out}


def matrix_idempotent_on_pair(n: int, M, field=EXACT) -> LocalizedIdempotent:
    """Pair-groupoid element with kernel ``M[x][y]`` on arrow ``x -> y`` (convolution = matrix product)."""
    G = pair_groupoid(n)
    vals = {x * n + y: M[x][y] for x in range(n) for y in range(n)}
    el = ConvolutionElement(G, vals, field)
    return LocalizedIdempotent(UnitalMatrix.from_conv(G, [[el]], field))


def conjugate_idempotent(idem: LocalizedIdempotent, W: UnitalMatrix, Winv: UnitalMatrix) -> LocalizedIdempotent:
    if not (W * Winv).__eq__(_identity_like(W)):
        raise GroupoidError("W and Winv are not inverse")
    return LocalizedIdempotent(W * idem.P * Winv)


def _identity_like(W: UnitalMatrix) -> UnitalMatrix:
    n = W.n
    return UnitalMatrix(W.G, [[1 if i == j else 0 for j in range(n)] for i in range(n)], [[None] * n for _ in range(n)], W.field)
