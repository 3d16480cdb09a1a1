"""Moyal, normal-ordered PBW and flat Fedosov star products."""
from groupoid_index.algebroid import su2
from groupoid_index.quantize import darboux_space, fedosov_recursion, moyal, pbw_product, symbol_space

sp = darboux_space(1, 4)
q, p = sp.gen("q1"), sp.gen("p1")
M = moyal(sp)
print("q*p - p*q =", M.commutator(q, p))
print("associator on (q^2 p, p^2 q, q p^3) vanishes:", M.associator(q * q * p, p * p * q, q * p ** 3).is_zero())

S = symbol_space(su2(), 3)
P = pbw_product(S)
x = [S.xi(i) for i in range(3)]
print("su(2): [xi1, xi2]_* =", P.commutator(x[0], x[1]))

F = fedosov_recursion(1, N=4)
print("flat Fedosov curvature is central:", F.central, F.central_form())
X1, X2 = F.weyl.ring.gen("x1"), F.weyl.ring.gen("x2")
print("x1 * x2 =", F.star(X1, X2))
