"""Brute-force analytic oracles on truncated operator models.

Two desk operators are modelled in spectral bases:

* the oscillator ``d/dx + x = sqrt(2) a`` on Hermite functions over R;
* banded Fourier operators such as ``-i d/dtheta`` over the circle.

Fredholm indices come from rank-nullity on square truncations with a tail
guard. The parametrix idempotent is built by functional calculus in the
spectral basis and then sampled as an integral kernel on a uniform grid, where
the characteristic-map sums of the convolution pairing are evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .charclass_index import poly_to_numpy
from .germ_vanest import GermCochain


class OracleError(ValueError):
    """Bad operator description or a failed oracle precondition."""


class LocalizationError(OracleError):
    """Kernel or cochain leaks outside the declared window."""


# ---------------------------------------------------------------------------
# operator descriptions and truncations


@dataclass(frozen=True)
class OperatorSpec:
    """Operator built from the basis ladder.

    ``hermite``: ``coeffs`` maps ``"a"``, ``"adag"``, ``"1"`` to coefficients of
    ``a``, ``a^dagger`` and the identity. ``fourier``: ``coeffs`` maps ``"D"``
    (for ``-i d/dtheta``) and ``"1"``. ``diagonal``: ``values`` is the diagonal.
    """

    basis: str
    coeffs: tuple = ()
    values: tuple = ()
    label: str = ""

    def coeff(self, key: str) -> complex:
        return dict(self.coeffs).get(key, 0)


_NAMED = {
    "d/dx + x": OperatorSpec("hermite", (("a", math.sqrt(2)),), label="d/dx + x"),
    "-d/dx + x": OperatorSpec("hermite", (("adag", math.sqrt(2)),), label="-d/dx + x"),
    "-i d/dtheta": OperatorSpec("fourier", (("D", 1),), label="-i d/dtheta"),
}


def operator_spec(desc) -> OperatorSpec:
    """Accept an :class:`OperatorSpec`, a named operator, or a mapping."""
    if isinstance(desc, OperatorSpec):
        return desc
    if isinstance(desc, str):
        if desc in _NAMED:
            return _NAMED[desc]
        if desc.startswith("-i d/dtheta +"):
            c = float(desc.split("+", 1)[1])
            return OperatorSpec("fourier", (("D", 1), ("1", c)), label=desc)
        raise OracleError(f"unknown operator {desc!r}")
    if isinstance(desc, Mapping):
        basis = desc.get("basis")
        if basis == "diagonal":
            return OperatorSpec("diagonal", values=tuple(desc["values"]), label="diagonal")
        if basis in ("hermite", "fourier"):
            return OperatorSpec(basis, tuple(sorted(desc.get("coeffs", {}).items())), label=desc.get("label", basis))
    raise OracleError(f"cannot interpret operator description {desc!r}")


@dataclass
class TruncatedOperator:
    basis: str
    K: int
    matrix: np.ndarray
    description: str

    def __post_init__(self):
        if self.matrix.shape != (self.size, self.size):
            raise OracleError("matrix size does not match the basis size")

    @property
    def size(self) -> int:
        if self.basis == "hermite":
            return self.K + 1
        if self.basis == "fourier":
            return 2 * self.K + 1
        return self.K

    def shell(self) -> np.ndarray:
        """Shell number of each basis vector (distance from the truncation edge grows inward)."""
        if self.basis == "fourier":
            return np.abs(np.arange(-self.K, self.K + 1))
        return np.arange(self.size)


def _ladder(K: int):
    a = np.diag(np.sqrt(np.arange(1, K + 1, dtype=float)), 1)
    return a, a.T.copy()


def truncate(desc, K: int) -> TruncatedOperator:
    spec = operator_spec(desc)
    if spec.basis == "hermite":
        a, ad = _ladder(K)
        M = spec.coeff("a") * a + spec.coeff("adag") * ad + spec.coeff("1") * np.eye(K + 1)
    elif spec.basis == "fourier":
        k = np.arange(-K, K + 1, dtype=float)
        M = np.diag(spec.coeff("D") * k + spec.coeff("1")) + spec.coeff("e") * np.eye(2 * K + 1, k=-1)
    elif spec.basis == "diagonal":
        M = np.diag(np.asarray(spec.values, dtype=complex))
        K = len(spec.values)
    else:
        raise OracleError(f"unknown basis {spec.basis!r}")
    return TruncatedOperator(spec.basis, K, np.asarray(M, dtype=complex), spec.label)


# ---------------------------------------------------------------------------
# Fredholm index by stabilized rank-nullity


@dataclass
class IndexStabilizationReport:
    per_K: list
    stabilized: bool
    index: int | None
    diagnostic: str = ""

    def as_dict(self) -> dict:
        return {"per_K": self.per_K, "stabilized": self.stabilized, "index": self.index,
                "diagnostic": self.diagnostic}


def _null_vectors(M: np.ndarray, tol: float):
    U, s, Vh = np.linalg.svd(M)
    scale = max(1.0, s.max() if s.size else 1.0)
    small = s <= tol * scale
    return Vh[small].conj().T, U[:, small]


def _accept(vectors: np.ndarray, tail_mask: np.ndarray, limit: float) -> tuple[int, int]:
    """Count null vectors away from the truncation edge; the rest are edge artifacts."""
    if vectors.shape[1] == 0:
        return 0, 0
    # rotate within the null space so edge-supported directions separate cleanly
    T = vectors[tail_mask]
    _, s, _ = np.linalg.svd(T, full_matrices=False) if T.size else (None, np.zeros(0), None)
    tail = int(np.sum(s**2 > limit))
    return vectors.shape[1] - tail, tail


def fredholm_index_oracle(desc, schedule: Sequence[int] = (20, 30, 40), tol: float = 1e-9,
                          tail_shells: int = 2, tail_limit: float = 0.5) -> IndexStabilizationReport:
    """Index of a banded operator from square truncations, required constant over three consecutive sizes."""
    if len(schedule) < 3:
        raise OracleError("stabilization needs at least three truncation sizes")
    rows = []
    for K in schedule:
        T = truncate(desc, K)
        sh = T.shell()
        tail = sh > sh.max() - tail_shells
        ker, coker = _null_vectors(T.matrix, tol)
        k_in, k_tail = _accept(ker, tail, tail_limit)
        c_in, c_tail = _accept(coker, tail, tail_limit)
        edge = float(np.linalg.norm(T.matrix[tail]))
        rows.append({"K": int(K), "dim_ker": k_in, "dim_coker": c_in, "index": k_in - c_in,
                     "rejected_ker": k_tail, "rejected_coker": c_tail, "tail_row_norm": edge})
    stable_at = None
    for i in range(len(rows) - 2):
        vals = {rows[i + m]["index"] for m in range(3)}
        if len(vals) == 1:
            stable_at = i
    if stable_at is None:
        return IndexStabilizationReport(rows, False, None, "index not constant over three consecutive sizes")
    return IndexStabilizationReport(rows, True, rows[stable_at]["index"])


# ---------------------------------------------------------------------------
# spectral models sampled on grids


def hermite_functions(K: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal Hermite functions ``psi_0..psi_K`` at ``x``, shape ``(len(x), K + 1)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.size, K + 1))
    out[:, 0] = math.pi**-0.25 * np.exp(-0.5 * x**2)
    if K >= 1:
        out[:, 1] = math.sqrt(2.0) * x * out[:, 0]
    for n in range(1, K):
        out[:, n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[:, n] - math.sqrt(n / (n + 1)) * out[:, n - 1]
    return out


@dataclass
class SpectralModel:
    """Operator ``D`` from a domain basis to a codomain basis, both sampled on a uniform grid.

    ``periodic`` grids wrap differences into ``(-period/2, period/2]``.
    """

    name: str
    D: np.ndarray
    grid: np.ndarray
    weights: np.ndarray
    dom: np.ndarray
    cod: np.ndarray
    periodic: bool
    period: float = 0.0
    builder: Callable[[int], "SpectralModel"] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.size

    def refine(self, factor: int = 2) -> "SpectralModel":
        if self.builder is None:
            raise OracleError("model has no refinement rule")
        return self.builder(self.n * factor)

    def differences(self, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
        v = x1 - x0
        if self.periodic:
            v = v - self.period * np.round(v / self.period)
        return v


def oscillator_model(K: int = 60, n: int = 256, L: float = 10.0) -> SpectralModel:
    """``d/dx + x`` from ``span(psi_0..psi_K)`` onto ``span(psi_0..psi_{K-1})``: the exact rectangular truncation."""
    a, _ = _ladder(K)
    D = math.sqrt(2) * a[:K, :]
    x = np.linspace(-L, L, n, endpoint=False) + L / n
    w = np.full(n, 2 * L / n)
    H = hermite_functions(K, x)
    return SpectralModel("oscillator", D.astype(complex), x, w, H.astype(complex), H[:, :K].astype(complex), False,
                         builder=lambda m: oscillator_model(K, m, L))


def circle_model(K: int = 60, n: int = 128, op="-i d/dtheta") -> SpectralModel:
    """A banded Fourier operator (default ``-i d/dtheta``) on modes ``-K..K``."""
    if n <= 2 * K:
        raise OracleError("grid must resolve every retained Fourier mode (n > 2K)")
    k = np.arange(-K, K + 1)
    th = 2 * math.pi * np.arange(n) / n
    F = np.exp(1j * np.outer(th, k)) / math.sqrt(2 * math.pi)
    D = truncate(op, K).matrix
    return SpectralModel("circle", D, th, np.full(n, 2 * math.pi / n), F, F, True,
                         2 * math.pi, builder=lambda m: circle_model(K, m, op))


# ---------------------------------------------------------------------------
# parametrix idempotent


@dataclass
class ParametrixIdempotent:
    """``P = e + R`` with ``e = diag(0, 1)``; spectral blocks plus the grid kernel of R."""

    model: SpectralModel
    t: float
    R_spec: np.ndarray
    sizes: tuple
    kernel: np.ndarray
    residual: float
    formula_gap: float
    leakage: float | None
    window: float | None

    def blocks(self) -> np.ndarray:
        """Grid operator matrix of R reshaped to ``(2, n, 2, n)``."""
        n = self.model.n
        return self.kernel.reshape(2, n, 2, n)

    def trace(self) -> complex:
        return complex(np.trace(self.R_spec[: self.sizes[0], : self.sizes[0]]) +
                       np.trace(self.R_spec[self.sizes[0]:, self.sizes[0]:]))


def _heat_parametrix(D: np.ndarray, t: float):
    lam, V = np.linalg.eigh(D.conj().T @ D)
    lam = np.clip(lam, 0.0, None)
    f = np.where(lam > 1e-14, -np.expm1(-t * lam) / np.where(lam > 1e-14, lam, 1.0), t)
    return (V * f) @ V.conj().T @ D.conj().T


def parametrix_idempotent(model: SpectralModel, t: float = 0.25, window: float | None = None,
                          tol: float = 1e-10, leak_tol: float = 1e-8, check_window: bool = False) -> ParametrixIdempotent:
    """Difference of projectors from the heat parametrix ``E = (1 - e^{-t D*D}) (D*D)^{-1} D*``.

    With ``S0 = 1 - ED`` and ``S1 = 1 - DE``,
    ``R = [[S0^2, S0(1 + S0)E], [S1 D, -S1^2]]``; every E is multiplied by a
    smoothing factor, so the kernel of R is localized at scale ``sqrt(t)``.
    The result is compared with ``L diag(1, 0) L^-1 - diag(0, 1)`` for
    ``L = [[S0, -E - S0 E], [D, S1]]``.
    """
    D = model.D
    m1, m0 = D.shape
    E = _heat_parametrix(D, t)
    S0 = np.eye(m0) - E @ D
    S1 = np.eye(m1) - D @ E
    R = np.block([[S0 @ S0, S0 @ (np.eye(m0) + S0) @ E], [S1 @ D, -S1 @ S1]])
    e = np.diag(np.r_[np.zeros(m0), np.ones(m1)])
    P = e + R
    residual = float(np.abs(P @ P - P).max())
    L = np.block([[S0, -E - S0 @ E], [D, S1]])
    proj = np.diag(np.r_[np.ones(m0), np.zeros(m1)])
    R_alt = L @ proj @ np.linalg.inv(L) - e
    gap = float(np.abs(R_alt - R).max())
    if residual > tol:
        raise OracleError(f"idempotent residual {residual:.3g} above tolerance")
    bases = [model.dom, model.cod]
    n = model.n
    K = np.zeros((2 * n, 2 * n), dtype=complex)
    offs = [0, m0]
    sz = [m0, m1]
    for a in range(2):
        for b in range(2):
            blk = R[offs[a]:offs[a] + sz[a], offs[b]:offs[b] + sz[b]]
            K[a * n:(a + 1) * n, b * n:(b + 1) * n] = bases[a] @ blk @ bases[b].conj().T * model.weights[None, :]
    leak = None
    if window is not None:
        v = model.differences(model.grid[:, None], model.grid[None, :])
        outside = np.abs(v) >= window
        mass = 0.0
        for a in range(2):
            for b in range(2):
                blk = K[a * n:(a + 1) * n, b * n:(b + 1) * n] * model.weights[:, None]
                mass += float(np.abs(blk[outside]).sum())
        leak = mass
        if check_window and leak > leak_tol:
            raise LocalizationError(f"kernel mass {leak:.3g} outside the window |v| < {window}")
    return ParametrixIdempotent(model, t, R, (m0, m1), K, residual, gap, leak, window)


# ---------------------------------------------------------------------------
# localized pairing on the grid


CochainInput = "float | Callable | GermCochain"


def germ_callable(germ: GermCochain) -> Callable:
    """Vectorized ``(x0, [v_1..v_k]) -> value`` for a rank-1 germ on a one-variable base."""
    m = germ.model
    if m.r != 1 or m.nb != 1:
        raise OracleError("grid pairing supports rank-1 models on a one-variable base")
    f = poly_to_numpy(germ.poly)
    base = m.ring.names[0]
    slots = [m.ring.names[m.slot_index(j, 0)] for j in range(1, germ.degree + 1)]

    def g(x0, vs):
        pt = {base: x0}
        pt.update({s: v for s, v in zip(slots, vs)})
        for nm in m.ring.names:
            pt.setdefault(nm, 0.0)
        return f(pt)

    return g


def _as_callable(phi, degree: int) -> Callable:
    if isinstance(phi, GermCochain):
        if phi.degree != degree:
            raise OracleError(f"component {degree} has degree {phi.degree}")
        return germ_callable(phi)
    if callable(phi):
        return phi
    c = complex(phi)
    return lambda x0, vs: np.full(np.broadcast(x0, *vs).shape, c)


def pairing_on_grid(components: Mapping[int, object], idem: ParametrixIdempotent,
                    support: float | None = None) -> dict:
    """``sum_i (-1)^i (2i)!/i! chi(phi_2i)((P - 1/2) x P x ... x P)`` on the kernel grid (degrees 0 and 2).

    Slot 0 carries ``p + (e - 1/2)`` with the constant acting as the identity
    kernel; later slots carry ``p``. ``support`` restricts the cochain to
    ``|v_j| < support`` (a window-supported cochain).
    """
    model = idem.model
    x = model.grid
    n = model.n
    A = idem.blocks()
    out = {}
    for deg, phi in sorted(components.items()):
        f = _as_callable(phi, deg)
        if deg == 0:
            diag = np.einsum("aiai->i", A)
            out[0] = complex(np.sum(f(x, []) * diag))
        elif deg == 2:
            A0 = A.copy()
            e_half = np.diag([-0.5, 0.5])
            for a in range(2):
                A0[a, :, a, :] += e_half[a, a] * np.eye(n)
            val = 0j
            # sum A0[c,k,a,i] A[a,i,b,j] A[b,j,c,k] phi[i,j,k], in slabs of i
            step = max(1, 2**21 // (n * n))
            for lo in range(0, n, step):
                sl = slice(lo, min(n, lo + step))
                x0 = x[sl, None, None]
                x1 = x[None, :, None]
                x2 = x[None, None, :]
                v1 = model.differences(x0, x1)
                v2 = model.differences(x1, x2)
                shape = (x0.shape[0], n, n)
                ph = np.broadcast_to(np.asarray(f(x0, [v1, v2])), shape)
                if support is not None:
                    v3 = model.differences(x2, x0)
                    ph = ph * ((np.abs(v1) < support) & (np.abs(v2) < support) & (np.abs(v3) < support))
                for a in range(2):
                    for c in range(2):
                        # T[i,j,k] = A0[c,k,a,i] phi[i,j,k]
                        T = ph * A0[c, :, a, sl].T[:, None, :]
                        for b in range(2):
                            W = np.einsum("ijk,jk->ij", T, A[b, :, c, :])
                            val += np.sum(W * A[a, sl, b, :])
            out[2] = complex(-2 * val)
        else:
            raise OracleError("grid pairing implements degrees 0 and 2")
    return {"total": complex(sum(out.values())), "by_degree": out}


@dataclass
class PairingReport:
    value: complex
    by_degree: dict
    coarse: complex
    fine: complex
    refinement_change: float
    n: int

    def as_dict(self) -> dict:
        return {"value": self.value, "by_degree": self.by_degree, "coarse": self.coarse, "fine": self.fine,
                "refinement_change": self.refinement_change, "n": self.n}


def localized_pairing_lhs(components: Mapping[int, object], idem: ParametrixIdempotent, order: int = 2,
                          window: float | None = None, support: float | None = None) -> PairingReport:
    """Pairing on the grid of ``idem`` and on the refined grid, Richardson-combined with step order ``order``.

    ``window`` rejects idempotents whose kernel leaks past it; ``support``
    cuts the cochain off outside ``|v| < support``.
    """
    if window is not None and (idem.leakage is None or idem.leakage > 1e-8):
        raise LocalizationError("idempotent is not localized within the cochain window")
    coarse = pairing_on_grid(components, idem, support)
    fine_idem = parametrix_idempotent(idem.model.refine(2), idem.t, idem.window)
    fine = pairing_on_grid(components, fine_idem, support)
    q = 2**order - 1
    val = fine["total"] + (fine["total"] - coarse["total"]) / q
    by = {d: fine["by_degree"][d] + (fine["by_degree"][d] - coarse["by_degree"][d]) / q for d in fine["by_degree"]}
    return PairingReport(complex(val), by, coarse["total"], fine["total"], abs(fine["total"] - coarse["total"]),
                         idem.model.n)
