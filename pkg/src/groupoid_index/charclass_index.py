"""Characteristic forms on the pull-back algebroid and the symbol side of the index formula.

Exact layer: connections on pi^! A, their curvature, the A-hat form and the
invariance of the volume. Numerical layer: the clutching idempotent of an
elliptic symbol, its Chern character sampled on quadrature grids of A*, and
the integral

    (2 pi i)^(-k) * int_{A*} < pi^* alpha ^ Ahat ^ ch(sigma), Omega_{pi^! A} >

with the degree-2j part of ch weighted by (-1 / (2 pi i))^j.

Orientation: a top form on pi^! A is paired with the frame ordered
symplectically as (l_1, n_1, ..., l_r, n_r), where l_i are horizontal lifts
and n_i vertical fields. ``ORIENTATION`` multiplies that pairing; its value
makes the Bott symbol x + i xi integrate to +1.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .algebroid import (
    AlgebroidForm,
    AlgebroidPresentation,
    PullbackAlgebroid,
    embed,
    modular_cocycle,
    perm_sign_sort,
    pullback_algebroid,
    wedge,
)
from .scalars import FOURIER, Poly

ORIENTATION = -1


class NonIdempotentError(ValueError):
    """Input matrix is not an idempotent to the requested tolerance."""


class EllipticityError(ValueError):
    """The invertibility witness failed on the test grid."""


# ---------------------------------------------------------------------------
# connections and curvature (exact)


@dataclass
class LieAlgebroidConnection:
    """Connection on pi^! A in its frame: ``nabla_{f_a} f_b = sum_c gamma[a][b][c] f_c``."""

    pb: PullbackAlgebroid
    gamma: list

    @property
    def algebroid(self) -> AlgebroidPresentation:
        return self.pb.algebroid

    @property
    def n(self) -> int:
        return self.pb.algebroid.rank

    def covariant(self, X: list, Y: list) -> list:
        """``nabla_X Y`` for sections given by frame coefficients."""
        P = self.algebroid
        n = self.n
        out = [P.ring.zero() for _ in range(n)]
        for a in range(n):
            if not X[a]:
                continue
            for c in range(n):
                if Y[c]:
                    out[c] = out[c] + X[a] * P.rho(a, Y[c])
            for b in range(n):
                if not Y[b]:
                    continue
                for c in range(n):
                    g = self.gamma[a][b][c]
                    if g:
                        out[c] = out[c] + X[a] * Y[b] * g
        return out

    def leibniz_defect(self, X: list, f: Poly, Y: list) -> list:
        """``nabla_X(fY) - f nabla_X Y - (rho(X) f) Y``; zero by construction."""
        P = self.algebroid
        fY = [f * y for y in Y]
        lhs = self.covariant(X, fY)
        rhs = [f * v for v in self.covariant(X, Y)]
        rf = P.ring.zero()
        for a in range(self.n):
            if X[a]:
                rf = rf + X[a] * P.rho(a, f)
        return [l - r - rf * y for l, r, y in zip(lhs, rhs, Y)]

    def _basis(self, a):
        P = self.algebroid
        return [P.ring.one() if i == a else P.ring.zero() for i in range(self.n)]

    def _theta(self, X, Y):
        th = self.pb.theta
        out = self.algebroid.ring.zero()
        for a in range(self.n):
            for b in range(self.n):
                if a != b and X[a] and Y[b]:
                    v = th.value((a, b))
                    if v:
                        out = out + X[a] * Y[b] * v
        return out

    def symplectic_defect(self) -> dict:
        """Nonzero values of ``(nabla_a Theta)(f_b, f_c)``."""
        P = self.algebroid
        out = {}
        for a, b, c in itertools.product(range(self.n), repeat=3):
            Xa, Yb, Zc = self._basis(a), self._basis(b), self._basis(c)
            v = P.rho(a, self._theta(Yb, Zc)) - self._theta(self.covariant(Xa, Yb), Zc) - self._theta(
                Yb, self.covariant(Xa, Zc))
            if v:
                out[(a, b, c)] = v
        return out

    def homogeneous_defect(self) -> dict:
        """Nonzero values of ``rho(E) nabla_X Y - nabla_[E,X] Y - nabla_X [E,Y]`` on frame fields."""
        P = self.algebroid
        E = self.pb.euler
        out = {}
        for a, b in itertools.product(range(self.n), repeat=2):
            X, Y = self._basis(a), self._basis(b)
            nab = self.covariant(X, Y)
            lhs = [_rho_vec(P, E, v) for v in nab]
            t1 = self.covariant(P.bracket_vec(E, X), Y)
            t2 = self.covariant(X, P.bracket_vec(E, Y))
            res = [l - u - w for l, u, w in zip(lhs, t1, t2)]
            if any(res):
                out[(a, b)] = res
        return out


def _rho_vec(P: AlgebroidPresentation, X: list, f: Poly) -> Poly:
    out = P.ring.zero()
    for a in range(P.rank):
        if X[a]:
            out = out + X[a] * P.rho(a, f)
    return out


def flat_connection(pb: PullbackAlgebroid) -> LieAlgebroidConnection:
    n = pb.algebroid.rank
    z = pb.algebroid.ring.zero()
    return LieAlgebroidConnection(pb, [[[z] * n for _ in range(n)] for _ in range(n)])


def connection_from_constants(pb: PullbackAlgebroid, gamma) -> LieAlgebroidConnection:
    ring = pb.algebroid.ring
    n = pb.algebroid.rank
    G = [[[gamma[a][b][c] if isinstance(gamma[a][b][c], Poly) else ring.const(gamma[a][b][c])
           for c in range(n)] for b in range(n)] for a in range(n)]
    return LieAlgebroidConnection(pb, G)


def curvature(conn: LieAlgebroidConnection) -> AlgebroidForm:
    """Matrix-valued 2-form with ``R(f_a, f_b)[e][d]`` the ``f_e`` component of ``R(f_a, f_b) f_d``.

    ``R(X, Y) = nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y]``.
    """
    P = conn.algebroid
    n = conn.n
    G = conn.gamma
    ring = P.ring
    comps = {}
    for a in range(n):
        for b in range(a + 1, n):
            M = [[ring.zero() for _ in range(n)] for _ in range(n)]
            for d in range(n):
                for e in range(n):
                    v = P.rho(a, G[b][d][e]) - P.rho(b, G[a][d][e])
                    for c in range(n):
                        v = v + G[b][d][c] * G[a][c][e] - G[a][d][c] * G[b][c][e] - P.c(a, b, c) * G[c][d][e]
                    M[e][d] = v
            comps[(a, b)] = M
    return AlgebroidForm(2, comps, ring, n)


# ---------------------------------------------------------------------------
# A-hat


def bernoulli(n: int) -> Fraction:
    """Bernoulli numbers with B_1 = -1/2."""
    B = [Fraction(1)]
    for m in range(1, n + 1):
        B.append(-sum(math.comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    return B[n]


def log_ahat_coefficients(order: int) -> list:
    """Coefficients c_k of ``log((x/2)/sinh(x/2)) = sum_k c_k x^(2k)`` for k = 1..order."""
    return [-bernoulli(2 * k) / (2 * k * math.factorial(2 * k)) for k in range(1, order + 1)]


def ahat_scalar_series(order: int) -> list:
    """Taylor coefficients of ``(x/2)/sinh(x/2)`` in powers of ``x^2`` through ``x^(2 order)``.

    Built as ``exp`` of the Bernoulli series for the logarithm.
    """
    c = log_ahat_coefficients(order)
    # exp of a power series in u = x^2 with zero constant term
    out = [Fraction(1)] + [Fraction(0)] * order
    for m in range(1, order + 1):
        # out_m = (1/m) sum_{k=1..m} k c_k out_{m-k}
        out[m] = sum(k * c[k - 1] * out[m - k] for k in range(1, m + 1)) / m
    return out


def _trace_form(F: AlgebroidForm, ring) -> AlgebroidForm:
    comps = {I: sum((M[i][i] for i in range(len(M))), ring.zero()) for I, M in F.comps.items()}
    return AlgebroidForm(F.degree, comps, ring)


def _one_form(ring) -> AlgebroidForm:
    return AlgebroidForm(0, {(): ring.one()}, ring)


def ahat_form(R: AlgebroidForm, rank: int, scale=1) -> dict:
    """``exp(1/2 tr log((R/2)/sinh(R/2)))`` as ``{degree: AlgebroidForm}``.

    ``rank`` is the algebroid rank bounding form degrees; ``scale`` multiplies
    R first (pass ``1/(2 pi i)``-type factors here).
    """
    ring = R.ring
    if scale != 1:
        R = R.scale(scale)
    top = rank
    kmax = top // 4
    c = log_ahat_coefficients(max(kmax, 1))
    # y = 1/2 sum_k c_k tr(R^(2k))
    y: dict = {}
    cur = None
    for m in range(1, 2 * kmax + 1):
        cur = R if cur is None else wedge(cur, R)
        if m % 2 == 0:
            k = m // 2
            t = _trace_form(cur, ring).scale(c[k - 1] * Fraction(1, 2))
            y[4 * k] = t
    out = {0: _one_form(ring)}
    # exp(y) = sum_m y^m / m!, y has degrees 4, 8, ...
    term = {0: _one_form(ring)}
    for m in range(1, kmax + 1):
        nxt: dict = {}
        for d1, f1 in term.items():
            for d2, f2 in y.items():
                if d1 + d2 > top:
                    continue
                w = wedge(f1, f2)
                nxt[d1 + d2] = nxt[d1 + d2] + w if d1 + d2 in nxt else w
        term = {d: f.scale(Fraction(1, m)) for d, f in nxt.items()}
        for d, f in term.items():
            out[d] = out[d] + f if d in out else f
    return out


# ---------------------------------------------------------------------------
# volume invariance


def volume_invariance_residual(A: AlgebroidPresentation, density=1) -> AlgebroidForm:
    """Modular cocycle of pi^! A for ``Theta^r (x) Omega`` with ``Omega = density * dx (x) e_1..e_r``.

    Zero exactly when the pulled-back volume is invariant.
    """
    pb = pullback_algebroid(A)
    return modular_cocycle(pb.algebroid, density)


# ---------------------------------------------------------------------------
# numerical evaluation of polynomials on grids


def poly_to_numpy(p: Poly) -> Callable[[Mapping[str, np.ndarray]], np.ndarray]:
    """Vectorized evaluator; Fourier variables take angles. Inputs broadcast against each other."""
    names, kinds = p.ring.names, p.ring.kinds
    terms = [(complex(c), e) for e, c in p.terms.items()]

    def f(pt: Mapping[str, np.ndarray]):
        arrs = {n: np.asarray(pt[n]) for n in names if n in pt}
        shape = np.broadcast(*arrs.values()).shape if arrs else ()
        powers: dict = {}

        def power(v, q):
            key = (v, q)
            if key not in powers:
                x = arrs[names[v]]
                powers[key] = np.exp(1j * q * x) if kinds[v] == FOURIER else x**q
            return powers[key]

        out = np.zeros(shape, dtype=complex)
        for c, e in terms:
            m = c
            for v, q in enumerate(e):
                if q:
                    m = m * power(v, q)
            out += m
        return out

    return f


# ---------------------------------------------------------------------------
# elliptic symbols and clutching


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffProfile:
    """Clutching angle ``t = (pi/2) step((s - inner)/(outer - inner))`` of the smallest singular value s."""

    inner: float = 0.5
    outer: float = 2.0

    def angle(self, s: np.ndarray) -> np.ndarray:
        return 0.5 * math.pi * smooth_step((s - self.inner) / (self.outer - self.inner))


@dataclass
class EllipticSymbolData:
    """Square matrix symbol on A* with its invertibility witness.

    ``entries[i][j]`` are polynomials in the base and fiber variables of the
    pull-back ring. ``witness`` is the smallest ``|det sigma|`` found on the
    test grid ``|xi| = 1``.
    """

    pb: PullbackAlgebroid
    entries: list
    witness: float
    _fns: list = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.entries)

    def evaluate(self, pt: Mapping[str, np.ndarray]) -> np.ndarray:
        """Array of shape ``grid + (n, n)``."""
        if self._fns is None:
            self._fns = [[poly_to_numpy(p) for p in row] for row in self.entries]
        rows = [[f(pt) for f in row] for row in self._fns]
        shape = np.broadcast(*[np.asarray(v) for v in pt.values()]).shape
        out = np.zeros(shape + (self.n, self.n), dtype=complex)
        for i in range(self.n):
            for j in range(self.n):
                out[..., i, j] = rows[i][j]
        return out


def _coerce_entry(v, ring):
    if isinstance(v, Poly):
        if v.ring != ring:
            return embed(v, ring) if set(v.ring.names) <= set(ring.names) else _fail(v)
        return v
    return ring.const(v)


def _fail(v):
    raise ValueError(f"symbol entry over unknown variables {v.ring.names}")


def elliptic_symbol(A: AlgebroidPresentation, entries, base_samples: int = 16, base_box: float = 3.0,
                    sphere_samples: int = 64, tol: float = 1e-9) -> EllipticSymbolData:
    """Wrap a matrix symbol and check invertibility on ``|xi| = 1`` over sampled base points.

    Entries may be :class:`Poly` over the pull-back ring (variables ``xi1..``)
    or scalars. Chart base coordinates are sampled in ``[-base_box, base_box]``.
    """
    pb = pullback_algebroid(A)
    ring = pb.algebroid.ring
    if not isinstance(entries, (list, tuple)) or not isinstance(entries[0], (list, tuple)):
        entries = [[entries]]
    ents = [[_coerce_entry(v, ring) for v in row] for row in entries]
    data = EllipticSymbolData(pb, ents, 0.0)
    pts = _witness_points(A, pb, base_samples, base_box, sphere_samples)
    S = data.evaluate(pts)
    det = np.abs(np.linalg.det(S))
    data.witness = float(det.min())
    if data.witness <= tol:
        raise EllipticityError(f"symbol not invertible on the unit sphere bundle (min |det| = {data.witness:.3g})")
    return data


def _witness_points(A, pb, base_samples, base_box, sphere_samples):
    r = A.rank
    axes = []
    for n, k in zip(A.ring.names, A.ring.kinds):
        if k == FOURIER:
            axes.append(np.linspace(0, 2 * math.pi, base_samples, endpoint=False))
        else:
            # keep the origin on the grid so symbols degenerate only there are caught
            axes.append(np.union1d(np.linspace(-base_box, base_box, base_samples), [0.0]))
    rng = np.random.default_rng(0)
    if r == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif r == 2:
        ang = np.linspace(0, 2 * math.pi, sphere_samples, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        dirs = rng.normal(size=(sphere_samples * r, r))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    grids = np.meshgrid(*axes, indexing="ij") if axes else []
    base_pts = [g.ravel() for g in grids] if axes else []
    nb = len(base_pts[0]) if base_pts else 1
    pt = {}
    for n, g in zip(A.ring.names, base_pts):
        pt[n] = np.repeat(g, len(dirs))
    for i, n in enumerate(pb.fiber_vars):
        pt[n] = np.tile(dirs[:, i], nb)
    return pt


def difference_idempotent(sigma: EllipticSymbolData, profile: CutoffProfile = CutoffProfile()):
    """Clutching idempotent ``P`` and the constant idempotent ``e_inf = diag(0, 1)``.

    With ``u`` the unitary part of sigma and t the clutching angle,
    ``P = [[cos^2 t, cos t sin t u^*], [cos t sin t u, sin^2 t]]``; P equals
    ``diag(1, 0)`` where sigma is small and ``e_inf`` where it is large.
    Returns ``(P_fn, e_inf)`` with ``P_fn(points) -> array (..., 2n, 2n)``.
    """
    n = sigma.n

    def P_fn(pt):
        S = sigma.evaluate(pt)
        U, s, Vh = np.linalg.svd(S)
        u = U @ Vh
        t = profile.angle(s[..., -1])
        c, sn = np.cos(t)[..., None, None], np.sin(t)[..., None, None]
        eye = np.eye(n)
        top = np.concatenate([c * c * eye, c * sn * np.conj(np.swapaxes(u, -1, -2))], axis=-1)
        bot = np.concatenate([c * sn * u, sn * sn * eye], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    e_inf = np.diag([0.0] * n + [1.0] * n)
    return P_fn, e_inf


# ---------------------------------------------------------------------------
# numerical forms on grids


def _frame_derivative(P_fn, pb: PullbackAlgebroid, pt: dict, h: float = 1e-3) -> list:
    """``dP(f_a) = rho(f_a) P`` for every frame element, by 5-point differences."""
    Pa = pb.algebroid
    names = Pa.ring.names
    partial = {}
    for v, name in enumerate(names):
        needed = any(Pa.anchor[a][v] for a in range(Pa.rank))
        if not needed:
            continue
        vals = []
        for step in (-2, -1, 1, 2):
            q = dict(pt)
            q[name] = np.asarray(pt[name]) + step * h
            vals.append(P_fn(q))
        partial[v] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
    out = []
    for a in range(Pa.rank):
        acc = None
        for v, d in partial.items():
            comp = Pa.anchor[a][v]
            if not comp:
                continue
            coef = poly_to_numpy(comp)(pt)[..., None, None] if not comp.is_constant() else complex(
                comp.constant_term())
            t = d * coef
            acc = t if acc is None else acc + t
        out.append(acc)
    return out


def chern_character_idem(P_fn, pb: PullbackAlgebroid, pt: dict, max_degree: int | None = None,
                         h: float = 1e-3, check_tol: float = 1e-8) -> dict:
    """Raw Chern character ``sum_j (1/j!) tr(P (dP)^(2j))`` sampled at ``pt``.

    Returns ``{2j: {I: array}}`` over strictly increasing frame multi-indices.
    The ``(-1/(2 pi i))^j`` weights are applied by :func:`index_rhs`.
    """
    P = P_fn(pt)
    res = np.abs(P @ P - P).max()
    if res > check_tol:
        raise NonIdempotentError(f"idempotent residual {res:.3g}")
    n = pb.algebroid.rank
    top = n if max_degree is None else min(max_degree, n)
    dP = _frame_derivative(P_fn, pb, pt, h)
    shape = P.shape[:-2]
    out = {0: {(): np.trace(P, axis1=-2, axis2=-1)}}
    for deg in range(2, top + 1, 2):
        j = deg // 2
        comps = {}
        for I in itertools.combinations(range(n), deg):
            if any(dP[a] is None for a in I):
                continue
            acc = np.zeros(shape, dtype=complex)
            for perm in itertools.permutations(I):
                s, _ = perm_sign_sort(perm)
                M = P
                for a in perm:
                    M = M @ dP[a]
                acc = acc + s * np.trace(M, axis1=-2, axis2=-1)
            comps[I] = acc / math.factorial(j)
        out[deg] = comps
    return out


def numeric_form(form: AlgebroidForm, pb: PullbackAlgebroid, pt: dict) -> dict:
    """Sample an exact scalar form (over A or pi^! A) at grid points."""
    ring = pb.algebroid.ring
    shape = np.broadcast(*[np.asarray(v) for v in pt.values()]).shape
    out = {}
    for I, c in form.comps.items():
        p = c if c.ring == ring else embed(c, ring)
        out[I] = poly_to_numpy(p)(pt) * np.ones(shape)
    return out


def wedge_numeric(a: dict, b: dict) -> dict:
    out = {}
    for I, x in a.items():
        for J, y in b.items():
            s, K = perm_sign_sort(I + J)
            if not s:
                continue
            out[K] = out[K] + s * x * y if K in out else s * x * y
    return out


def symplectic_order_sign(r: int) -> int:
    seq = []
    for i in range(r):
        seq += [i, r + i]
    s, _ = perm_sign_sort(seq)
    return s


# ---------------------------------------------------------------------------
# quadrature


@dataclass
class QuadratureSpec:
    """Tensor grid on A*: torus axes use ``torus_points`` uniform nodes; chart and fiber axes use
    ``panels`` Gauss--Legendre panels of ``nodes`` points on ``[-box, box]``."""

    box: float = 2.5
    panels: int = 8
    nodes: int = 16
    torus_points: int = 16
    base_box: float | None = None


def _gl_axis(L: float, panels: int, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(-L, L, panels + 1)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def quadrature_grid(pb: PullbackAlgebroid, spec: QuadratureSpec):
    A = pb.source
    axes, weights, names = [], [], []
    for n, k in zip(A.ring.names, A.ring.kinds):
        if k == FOURIER:
            m = spec.torus_points
            axes.append(np.linspace(0, 2 * math.pi, m, endpoint=False))
            weights.append(np.full(m, 2 * math.pi / m))
        else:
            x, w = _gl_axis(spec.base_box or spec.box, spec.panels, spec.nodes)
            axes.append(x)
            weights.append(w)
        names.append(n)
    for n in pb.fiber_vars:
        x, w = _gl_axis(spec.box, spec.panels, spec.nodes)
        axes.append(x)
        weights.append(w)
        names.append(n)
    grids = np.meshgrid(*axes, indexing="ij")
    W = np.ones(grids[0].shape)
    for i, w in enumerate(weights):
        sh = [1] * len(axes)
        sh[i] = len(w)
        W = W * w.reshape(sh)
    return {n: g for n, g in zip(names, grids)}, W


# ---------------------------------------------------------------------------
# right-hand side of the index formula


@dataclass
class IndexRHSReport:
    value: complex
    by_degree: dict
    normalization: str
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"value": self.value, "by_degree": self.by_degree, "normalization": self.normalization,
                "warnings": list(self.warnings)}


def index_rhs(alpha: AlgebroidForm | None, sigma: EllipticSymbolData, conn: LieAlgebroidConnection | None = None,
              density: Poly | complex | None = None, profile: CutoffProfile = CutoffProfile(),
              quad: QuadratureSpec | None = None, h: float = 1e-3) -> IndexRHSReport:
    """``(2 pi i)^(-k) int <pi^* alpha ^ Ahat(pi^! A) ^ ch(sigma), Omega>`` for alpha of degree 2k.

    ``alpha=None`` means the constant cocycle 1. The connection defaults to the
    flat one. ``by_degree`` maps the ch degree 2j to its contribution.
    """
    pb = sigma.pb
    A = pb.source
    r = A.rank
    top = 2 * r
    quad = quad or QuadratureSpec(box=1.25 * profile.outer)
    ring = pb.algebroid.ring
    if alpha is None:
        alpha = AlgebroidForm(0, {(): A.ring.one()}, A.ring)
    k2 = alpha.degree
    if k2 % 2:
        raise ValueError("alpha must have even degree")
    warn = []
    if k2 > top:
        warn.append("alpha degree exceeds the top degree; contribution is 0")
        return IndexRHSReport(0j, {}, _norm_text(k2 // 2), warn)
    pt, W = quadrature_grid(pb, quad)
    P_fn, e_inf = difference_idempotent(sigma, profile)
    ch = chern_character_idem(P_fn, pb, pt, top - k2, h)
    ch[0] = {(): ch[0][()] - np.trace(e_inf)}
    alpha_n = numeric_form(AlgebroidForm(k2, {I: embed(c, ring) for I, c in alpha.comps.items()}, ring), pb, pt)
    R = curvature(conn or flat_connection(pb))
    ahat = ahat_form(R, top)
    ahat_n = {d: numeric_form(f, pb, pt) for d, f in ahat.items()}
    if density is None:
        dens = 1.0
    elif isinstance(density, Poly):
        dens = poly_to_numpy(embed(density, ring))(pt)
    else:
        dens = complex(density)
    full = tuple(range(top))
    sgn = ORIENTATION * symplectic_order_sign(r)
    k = k2 // 2
    pref = (2j * math.pi) ** (-k)
    by_degree = {}
    total = 0j
    for deg, comps in sorted(ch.items()):
        j = deg // 2
        rest = top - k2 - deg
        if rest < 0 or rest not in ahat_n:
            continue
        w = (-1.0 / (2j * math.pi)) ** j
        form = wedge_numeric(wedge_numeric(alpha_n, ahat_n[rest]), comps)
        integrand = form.get(full)
        if integrand is None:
            continue
        val = pref * w * sgn * np.sum(integrand * dens * W)
        by_degree[deg] = complex(val)
        total += val
    if not by_degree:
        warn.append("integrand has no top-degree component")
    return IndexRHSReport(complex(total), by_degree, _norm_text(k), warn)


def _norm_text(k: int) -> str:
    return (f"(2*pi*i)^(-{k}) * sum_j (-1/(2*pi*i))^j (1/j!) tr(P (dP)^(2j)); "
            f"top form paired with (l_1, n_1, ..., l_r, n_r) times ORIENTATION={ORIENTATION}")


def ch_closedness_residual(sigma: EllipticSymbolData, profile: CutoffProfile = CutoffProfile(),
                           points: dict | None = None, h: float = 1e-3) -> float:
    """Max over sample points of ``|d_CE ch|`` (numerical derivatives along the frame)."""
    pb = sigma.pb
    Pa = pb.algebroid
    n = Pa.rank
    P_fn, _ = difference_idempotent(sigma, profile)
    if points is None:
        rng = np.random.default_rng(1)
        points = {}
        for name, kind in zip(Pa.ring.names, Pa.ring.kinds):
            lo, hi = (0, 2 * math.pi) if kind == FOURIER else (-profile.outer, profile.outer)
            points[name] = rng.uniform(lo, hi, size=32)
    worst = 0.0
    for deg in range(2, n, 2):
        def ch_fn(q, deg=deg):
            return chern_character_idem(P_fn, pb, q, deg, h / 4)[deg]

        base = ch_fn(points)
        shifted = {}
        for v, name in enumerate(Pa.ring.names):
            vals = []
            for step in (-2, -1, 1, 2):
                q = dict(points)
                q[name] = points[name] + step * h
                vals.append(ch_fn(q))
            shifted[v] = {I: (vals[0][I] - 8 * vals[1][I] + 8 * vals[2][I] - vals[3][I]) / (12 * h) for I in base}
        for J in itertools.combinations(range(n), deg + 1):
            acc = 0.0
            for p, jp in enumerate(J):
                rest = J[:p] + J[p + 1:]
                if rest not in base:
                    continue
                for v in shifted:
                    comp = Pa.anchor[jp][v]
                    if comp:
                        acc = acc + (-1) ** p * complex(comp.constant_term()) * shifted[v][rest]
            for p in range(deg + 1):
                for q in range(p + 1, deg + 1):
                    rest = tuple(J[m] for m in range(deg + 1) if m not in (p, q))
                    for m in range(n):
                        c = Pa.c(J[p], J[q], m)
                        if c:
                            s, key = perm_sign_sort((m,) + rest)
                            if s and key in base:
                                acc = acc + (-1) ** (p + q) * s * complex(c.constant_term()) * base[key]
            worst = max(worst, float(np.max(np.abs(acc))))
    return worst
