"""Three routes to the index of d/dx + x.

1. Rank-nullity on truncations of the operator in the Hermite basis.
2. The trace pairing of its parametrix idempotent, sampled as a kernel on a grid.
3. The integral of the Chern character of the symbol x + i xi over the plane.
"""
from groupoid_index.algebroid import pullback_algebroid, tangent_chart
from groupoid_index.charclass_index import elliptic_symbol, index_rhs
from groupoid_index.oracle_ops import fredholm_index_oracle, localized_pairing_lhs, oscillator_model, parametrix_idempotent
from groupoid_index.scalars import I

rep = fredholm_index_oracle("d/dx + x")
print("Fredholm oracle:", rep.index, "stabilized" if rep.stabilized else "not stabilized")

P = parametrix_idempotent(oscillator_model(60, 256, 10.0), t=0.25)
lhs = localized_pairing_lhs({0: 1}, P)
print(f"grid pairing: {lhs.value.real:.12f}  (refinement change {lhs.refinement_change:.1e})")

A = tangent_chart(1)
r = pullback_algebroid(A).algebroid.ring
sigma = elliptic_symbol(A, [[r.gen("x1") + r.gen("xi1") * r.const(I)]])
rhs = index_rhs(None, sigma)
print(f"characteristic integral: {rhs.value.real:.9f}")
print("normalization:", rhs.normalization)
