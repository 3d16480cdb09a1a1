"""Chevalley-Eilenberg cohomology and the van Est map on local groupoid models."""
import numpy as np

from groupoid_index.algebroid import affine, ce_cohomology, ce_differential, heisenberg, modular_cocycle, su2
from groupoid_index.germ_vanest import LocalGroupoidModel, germ_diff, random_germ, van_est_phi

for A in (su2(), heisenberg(), affine()):
    print(f"{A.name:10s} Betti numbers {ce_cohomology(A).betti}")

th = modular_cocycle(affine())
print("modular cocycle of the affine algebra on e1:", th[(0,)])

# the van Est map intertwines the groupoid and algebroid differentials, exactly modulo the germ cap
A = su2()
m = LocalGroupoidModel(A, cap=5, max_degree=4)
rng = np.random.default_rng(1)
for k in range(3):
    phi = random_germ(m, k, rng)
    same = van_est_phi(germ_diff(phi)) == ce_differential(A, van_est_phi(phi))
    print(f"degree {k}: Phi(d phi) == d_CE Phi(phi): {same}")
