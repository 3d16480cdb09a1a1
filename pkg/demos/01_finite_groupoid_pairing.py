"""Cyclic cocycles of a finite groupoid paired with matrix idempotents.

On the pair groupoid of n points the convolution algebra is the n x n matrix
algebra, so the degree-0 pairing should return the rank of the idempotent.
"""
from fractions import Fraction

import numpy as np

from groupoid_index.groupoid_finite import (
    chern_connes_pair, cyclic_tau, diff_d, matrix_idempotent_on_pair, modular_function, pair_groupoid, random_cochain,
)

n = 4
# a rank-2 idempotent that is not a coordinate projector
M = [[Fraction(1), Fraction(0), Fraction(1), Fraction(0)],
     [Fraction(0), Fraction(1), Fraction(0), Fraction(2)],
     [Fraction(0), Fraction(0), Fraction(0), Fraction(0)],
     [Fraction(0), Fraction(0), Fraction(0), Fraction(0)]]
idem = matrix_idempotent_on_pair(n, M)
print("pairing with the constant 0-cocycle:", chern_connes_pair({0: 1}, idem)["total"])

G = pair_groupoid(3)
rng = np.random.default_rng(0)
phi = random_cochain(G, 2, rng)
print("d d phi vanishes:", diff_d(diff_d(phi)).is_zero())
t = phi
for _ in range(3):
    t = cyclic_tau(t)
print("tau^3 phi == phi:", t == phi)

delta = modular_function(G, [1, 2, 4])
print("modular function on 0 -> 2:", delta((2,)))
