"""Inner approximations of the copositive cone on small matrices.

The Horn matrix is copositive but lies in none of the first few
nonnegative-coefficient cones C_r.  The first SOS-type cone Q_1 does contain it.
"""

import numpy as np

from copokernel import tensor_cop as tc

HORN = [[1, -1, 1, 1, -1],
        [-1, 1, -1, 1, 1],
        [1, -1, 1, -1, 1],
        [1, 1, -1, 1, -1],
        [-1, 1, 1, -1, 1]]

for r in range(3):
    poly = tc.in_Cr(HORN, r)
    tens = tc.in_Cr(HORN, r, method="tensor")
    print(f"Horn in C_{r}: {poly.member} (coefficient route), {tens.member} (tensor route)")
for r in range(2):
    print(f"Horn in Q_{r}: {tc.in_Qr(HORN, r).member}")

# Sampled on the simplex.  The true minimum is 0, reached only on faces.
X = np.random.default_rng(0).dirichlet(np.ones(5), size=20000)
vals = np.einsum("ki,ij,kj->k", X, np.array(HORN, float), X)
print(f"sampled min of x^T H x on the simplex: {vals.min():.4f}")

# A strictly copositive matrix enters C_r by the Polya degree.
M = [[2, -1, 0], [-1, 2, -1], [0, -1, 2]]
p = tc.polya_degree(M)
print(f"Polya degree of tridiag(-1, 2, -1): {p}; in C_{p}: {tc.in_Cr(M, p).member}")
