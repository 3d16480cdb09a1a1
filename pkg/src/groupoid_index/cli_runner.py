"""Scenario runner: ``groupoid-index <kind> --config scenario.json``.

A scenario file is one JSON object with ``schema_version`` and the fields of
its kind; unknown fields are rejected. Exit status is 0 when every check
passes, 1 when a check fails and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import algebroid as alg
from . import charclass_index as cc
from . import germ_vanest as gv
from . import groupoid_finite as gf
from . import oracle_ops as oo
from . import quantize as qz
from .scalars import EXACT, Cx, Poly, field_of

SCHEMA_VERSION = 1
REPORT_FORMAT = "groupoid-index-report/1"
KINDS = ("check-algebroid", "cohomology", "groupoid-pairing", "star-verify", "vanest-verify", "index-verify")

_COMMON = {"schema_version", "kind", "mode", "seed", "description"}
_FIELDS = {
    "check-algebroid": {"algebroid", "samples"},
    "cohomology": {"algebroid", "cutoff", "degree_cap", "expected_betti"},
    "groupoid-pairing": {"objects", "ranks", "conjugations"},
    "star-verify": {"star", "algebroid", "N", "max_degree"},
    "vanest-verify": {"algebroid", "cap", "max_degree", "samples"},
    "index-verify": {"model", "t", "grid", "modes", "quadrature", "tolerances", "expected"},
}


class ConfigError(ValueError):
    """Invalid or unresolvable scenario."""


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckRecord:
    name: str
    expected: object
    computed: object
    residual: object
    passed: bool
    provenance: str

    def as_obj(self) -> dict:
        return {"name": self.name, "expected": _jsonable(self.expected), "computed": _jsonable(self.computed),
                "residual": _jsonable(self.residual), "pass": bool(self.passed), "provenance": self.provenance}


@dataclass
class RunReport:
    scenario: dict
    records: list = field(default_factory=list)
    timing: float | None = None
    truncation: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, name, expected, computed, residual, passed, provenance):
        self.records.append(CheckRecord(name, expected, computed, residual, bool(passed), provenance))

    def as_obj(self) -> dict:
        return {"format": REPORT_FORMAT, "scenario": _jsonable(self.scenario), "pass": self.passed,
                "records": [r.as_obj() for r in self.records], "truncation": _jsonable(self.truncation),
                "timing": self.timing}


def _jsonable(v):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, Cx):
        return {"re": _jsonable(v.re), "im": _jsonable(v.im)}
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Poly):
        return repr(v)
    return str(v)


def _dump(v) -> str:
    """JSON text with floats at 17 significant digits and keys in insertion order."""
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return json.dumps(str(v))
        text = format(v, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dump(x)}" for k, x in v.items()) + "}"
    if isinstance(v, list):
        return "[" + ", ".join(_dump(x) for x in v) + "]"
    return json.dumps(v)


_RAT = re.compile(r"^-?\d+/\d+$")


def _undump(v):
    if isinstance(v, str) and _RAT.match(v):
        return Fraction(v)
    if isinstance(v, dict):
        return {k: _undump(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_undump(x) for x in v]
    return v


def emit_report(report: RunReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (_dump(report.as_obj()) + "\n").encode()
    if fmt == "csv-summary":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "expected", "computed", "residual", "pass", "provenance"])
        for r in report.records:
            o = r.as_obj()
            w.writerow([o["name"], _dump(o["expected"]), _dump(o["computed"]), _dump(o["residual"]),
                        "true" if o["pass"] else "false", o["provenance"]])
        return buf.getvalue().encode()
    raise ConfigError(f"unknown format {fmt!r}")


def parse_report(data: bytes | str) -> dict:
    """Inverse of the json emitter: rationals come back as :class:`Fraction`."""
    return _undump(json.loads(data))


# ---------------------------------------------------------------------------
# configuration


def load_config(text: str, kind: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("scenario must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario kind {kind!r}")
    if "kind" in cfg and cfg["kind"] != kind:
        raise ConfigError(f"scenario kind {cfg['kind']!r} does not match subcommand {kind!r}")
    unknown = set(cfg) - _COMMON - _FIELDS[kind]
    if unknown:
        raise ConfigError(f"unknown fields: {sorted(unknown)}")
    for key in ("tolerances",):
        for name, tol in cfg.get(key, {}).items():
            if not isinstance(tol, (int, float)) or tol <= 0:
                raise ConfigError(f"tolerance {name} must be positive")
    return cfg


_ALGEBROIDS = {"su2": alg.su2, "h3": alg.heisenberg, "heisenberg": alg.heisenberg, "affine": alg.affine}


def build_algebroid(spec, fld) -> alg.AlgebroidPresentation:
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("algebroid must be a name or an object with 'name'")
    name = spec["name"]
    extra = set(spec) - {"name", "rank", "n", "cutoff", "degree_cap", "brackets"}
    if extra:
        raise ConfigError(f"unknown algebroid fields: {sorted(extra)}")
    try:
        if name in _ALGEBROIDS:
            return _ALGEBROIDS[name](fld)
        if name == "abelian":
            return alg.abelian(int(spec["rank"]), fld)
        if name == "tangent_torus":
            return alg.tangent_torus(int(spec.get("n", 1)), int(spec.get("cutoff", 4)), fld)
        if name == "tangent_chart":
            return alg.tangent_chart(int(spec.get("n", 1)), spec.get("degree_cap"), fld)
        if name == "lie_algebra":
            consts = {}
            for i, j, k, c in spec["brackets"]:
                consts.setdefault((int(i), int(j)), {})[int(k)] = Fraction(str(c))
            A = alg.lie_algebra(consts, "custom", fld)
            if "rank" in spec and A.rank != spec["rank"]:
                raise ConfigError("brackets do not match the declared rank")
            return A
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot build algebroid {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown algebroid {name!r}")


# ---------------------------------------------------------------------------
# scenario pipelines


def _rng(cfg):
    return np.random.default_rng(int(cfg.get("seed", 0)))


def _check_algebroid(cfg, fld, rep: RunReport):
    A = build_algebroid(cfg.get("algebroid"), fld)
    bad = alg.check_structure(A)
    rep.add("structure", 0, len(bad), len(bad), not bad, "DERIVED: anchor morphism, Leibniz and Jacobi on the frame")
    rng = _rng(cfg)
    worst = 0
    for _ in range(int(cfg.get("samples", 5))):
        for k in range(A.rank):
            comps = {}
            for I in itertools.combinations(range(A.rank), k):
                comps[I] = A.ring.const(int(rng.integers(-3, 4)))
            a = alg.AlgebroidForm(k, comps, A.ring)
            dd = alg.ce_differential(A, alg.ce_differential(A, a))
            worst = max(worst, len(dd.comps))
    rep.add("d_squared", 0, worst, worst, worst == 0, "TRIVIAL: d o d = 0 on random constant forms")


def _cohomology(cfg, fld, rep: RunReport):
    A = build_algebroid(cfg.get("algebroid"), fld)
    r = alg.ce_cohomology(A, cfg.get("cutoff"), cfg.get("degree_cap"))
    rep.truncation = r.truncation
    exp = cfg.get("expected_betti")
    ok = exp is None or list(exp) == list(r.betti)
    rep.add("betti", exp, r.betti, None, ok, "DERIVED: rank-nullity of the CE matrices")
    if r.stable is not None:
        rep.add("cutoff_stability", True, all(r.stable), None, all(r.stable), "DERIVED: repeat at a larger cutoff")


def _random_idempotent(n: int, rank: int, rng):
    """Exact idempotent ``W diag(1..1, 0..0) W^-1`` with unipotent integer W."""
    L = [[Fraction(int(rng.integers(-2, 3))) if i > j else Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    U = [[Fraction(int(rng.integers(-2, 3))) if i < j else Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    W = _matmul(L, U)
    Winv = _inverse(W)
    D = [[Fraction(int(i == j and i < rank)) for j in range(n)] for i in range(n)]
    return _matmul(_matmul(W, D), Winv)


def _matmul(A, B):
    return [[sum((A[i][k] * B[k][j] for k in range(len(B))), Fraction(0)) for j in range(len(B[0]))]
            for i in range(len(A))]


def _inverse(M):
    n = len(M)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        p = next(r for r in range(c, n) if aug[r][c])
        aug[c], aug[p] = aug[p], aug[c]
        piv = aug[c][c]
        aug[c] = [v / piv for v in aug[c]]
        for r in range(n):
            if r != c and aug[r][c]:
                f = aug[r][c]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[c])]
    return [row[n:] for row in aug]


def _groupoid_pairing(cfg, fld, rep: RunReport):
    n = int(cfg.get("objects", 3))
    if not 1 <= n <= 6:
        raise ConfigError("objects must be between 1 and 6")
    rng = _rng(cfg)
    for k in cfg.get("ranks", [1, 2, 3]):
        if not 0 <= k <= n:
            raise ConfigError(f"rank {k} exceeds the number of objects")
        M = _random_idempotent(n, int(k), rng)
        idem = gf.matrix_idempotent_on_pair(n, M, EXACT)
        val = gf.chern_connes_pair({0: 1}, idem)["total"]
        if isinstance(val, Cx) and not val.im:
            val = val.re
        rep.add(f"rank_law[{k}]", Fraction(k), val, Fraction(val) - k if isinstance(val, Fraction) else val - k,
                val == k, "DERIVED: matrix rank of the idempotent")


def _star_verify(cfg, fld, rep: RunReport):
    kind = cfg.get("star", "moyal")
    N = int(cfg.get("N", 3))
    deg = int(cfg.get("max_degree", 2))
    if kind in ("moyal", "normal_ordered"):
        space = qz.darboux_space(1, N)
        star = qz.moyal(space, N) if kind == "moyal" else qz.normal_ordered(space, N)
        q, p = space.gen("q1"), space.gen("p1")
        gens = [q, p]
        comm = star.commutator(q, p)
        target = space.hbar_gen() * space.const(Cx(0, -1))
        rep.add("commutator_q_p", "-i*hbar", repr(comm.poly), None, comm == target,
                "TRIVIAL: first-order term of the product")
    elif kind == "pbw":
        A = build_algebroid(cfg.get("algebroid", "su2"), EXACT)
        space = qz.symbol_space(A, N)
        star = qz.pbw_product(space, N)
        gens = [space.xi(i) for i in range(space.rank)]
    else:
        raise ConfigError(f"unknown star product {kind!r}")
    monos = _monomials(gens, deg)
    worst = 0
    for a in monos:
        for b in monos:
            for c in monos[: len(gens) + 1]:
                res = star.associator(a, b, c)
                worst = max(worst, len(res.poly.terms))
    rep.add("associativity", 0, worst, worst, worst == 0, f"TRIVIAL: terminating series through hbar^{N}")
    defect = 0
    if star.homogeneous:
        for a in monos:
            for b in monos:
                defect = max(defect, len(qz.xi_derivation_defect(star, a, b).poly.terms))
        rep.add("xi_derivation", 0, defect, defect, defect == 0, "DERIVED: hbar d/dhbar plus fiber Euler")


def _monomials(gens, deg):
    out = [gens[0].space.const(1)]
    frontier = [out[0]]
    for _ in range(deg):
        frontier = [m * g for m in frontier for g in gens]
        out.extend(frontier)
    seen, uniq = set(), []
    for m in out:
        key = tuple(sorted(m.poly.terms))
        if key not in seen:
            seen.add(key)
            uniq.append(m)
    return uniq


def _vanest_verify(cfg, fld, rep: RunReport):
    A = build_algebroid(cfg.get("algebroid"), EXACT)
    cap = int(cfg.get("cap", 4))
    top = int(cfg.get("max_degree", 2))
    try:
        m = gv.LocalGroupoidModel(A, cap, top + 1)
    except (alg.StructureError, gv.CapOverflowError) as exc:
        rep.add("model", "constructible", str(exc), None, False, "TRIVIAL: local model preconditions")
        return
    rng = _rng(cfg)
    for k in range(top + 1):
        worst = 0
        for _ in range(int(cfg.get("samples", 3))):
            phi = gv.random_germ(m, k, rng)
            lhs = gv.van_est_phi(gv.germ_diff(phi))
            rhs = alg.ce_differential(A, gv.van_est_phi(phi))
            worst = max(worst, len((lhs - rhs).comps))
        rep.add(f"chain_map[deg {k}]", 0, worst, worst, worst == 0, "DERIVED: exact germ calculus modulo cap")


def _index_verify(cfg, fld, rep: RunReport):
    model = cfg.get("model", "oscillator")
    tol = {"lhs": 1e-3, "rhs": 1e-6, **cfg.get("tolerances", {})}
    quad = cfg.get("quadrature", {})
    if model == "oscillator":
        expected = cfg.get("expected", 1)
        oracle = oo.fredholm_index_oracle("d/dx + x")
        sm = oo.oscillator_model(int(cfg.get("modes", 60)), int(cfg.get("grid", 256)))
        A = alg.tangent_chart(1)
        pb = alg.pullback_algebroid(A)
        r = pb.algebroid.ring
        entries = [[r.gen(r.names[0]) + r.gen("xi1") * r.const(Cx(0, 1))]]
        t = float(cfg.get("t", 0.25))
    elif model == "circle":
        expected = cfg.get("expected", 0)
        oracle = oo.fredholm_index_oracle("-i d/dtheta")
        sm = oo.circle_model(int(cfg.get("modes", 60)), int(cfg.get("grid", 128)))
        A = alg.tangent_torus(1, 2)
        pb = alg.pullback_algebroid(A)
        r = pb.algebroid.ring
        entries = [[r.gen("xi1")]]
        t = float(cfg.get("t", 0.01))
    else:
        raise ConfigError(f"unknown index model {model!r}")
    rep.add("oracle_index", expected, oracle.index, None, oracle.stabilized and oracle.index == expected,
            "DERIVED: stabilized rank-nullity")
    idem = oo.parametrix_idempotent(sm, t)
    lhs = oo.localized_pairing_lhs({0: 1}, idem)
    rep.add("lhs", expected, lhs.value.real, abs(lhs.value - expected), abs(lhs.value - expected) <= tol["lhs"],
            "DERIVED: grid pairing of the parametrix idempotent")
    rep.add("lhs_refinement", 0, lhs.refinement_change, lhs.refinement_change,
            lhs.refinement_change <= 5 * tol["lhs"], "DERIVED: grid halving")
    sigma = cc.elliptic_symbol(A, entries)
    spec = cc.QuadratureSpec(**quad) if quad else None
    rhs = cc.index_rhs(None, sigma, quad=spec)
    rep.add("rhs", expected, rhs.value.real, abs(rhs.value - expected), abs(rhs.value - expected) <= tol["rhs"],
            "DERIVED: quadrature of the characteristic-class integral")
    rep.add("lhs_equals_rhs", 0, abs(lhs.value - rhs.value), abs(lhs.value - rhs.value),
            abs(lhs.value - rhs.value) <= tol["lhs"], "DERIVED: both sides")
    rep.truncation = {"normalization": rhs.normalization, "warnings": rhs.warnings}


_PIPELINES = {
    "check-algebroid": _check_algebroid,
    "cohomology": _cohomology,
    "groupoid-pairing": _groupoid_pairing,
    "star-verify": _star_verify,
    "vanest-verify": _vanest_verify,
    "index-verify": _index_verify,
}


def run_scenario(cfg: dict, kind: str, mode: str | None = None, seed: int | None = None,
                 timing: bool = False) -> RunReport:
    """Run a validated scenario; numerical or truncation failures become failed records."""
    cfg = dict(cfg)
    if mode is not None:
        cfg["mode"] = mode
    if seed is not None:
        cfg["seed"] = seed
    try:
        fld = field_of(cfg.get("mode", "exact"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep = RunReport({"kind": kind, **cfg})
    start = time.perf_counter()
    try:
        _PIPELINES[kind](cfg, fld, rep)
    except ConfigError:
        raise
    except (alg.ComplexTooLargeError, gv.CapOverflowError, oo.OracleError, cc.EllipticityError,
            cc.NonIdempotentError, qz.UnsupportedModelError) as exc:
        rep.add("pipeline", "completed", f"{type(exc).__name__}: {exc}", None, False, "TRIVIAL: structured failure")
    if timing:
        rep.timing = time.perf_counter() - start
    return rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="groupoid-index", description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--mode", choices=("exact", "float"))
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("json", "csv-summary"), default="json")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical output)")
    args = ap.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = load_config(fh.read(), args.kind)
        rep = run_scenario(cfg, args.kind, args.mode, args.seed, args.timing)
    except (OSError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    data = emit_report(rep, args.format)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
