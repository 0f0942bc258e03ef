"""
A singular matrix as a product of two nilpotents
================================================

Any singular matrix, padded with zeros when its kernel is too small, splits
into three equal parts. In that basis it factors as ``M N`` with
``M^3 = N^3 = 0``.
"""

import numpy as np

from opfactor import factor_two_nilpotents
from opfactor.families import random_singular

rng = np.random.default_rng(1)
T = random_singular(10, 2, rng)
print("rank", np.linalg.matrix_rank(T), "of", T.shape[0])

fac = factor_two_nilpotents(T)
dec = fac.decomposition
print("part size d =", dec.d, " zero padding =", dec.padding)

M, N = fac.factors["M"], fac.factors["N"]
print("relative residual ||MN - T||_F / ||T||_F =", fac.residuals[0])
print("nilpotency indices", fac.nilpotency_indices)

# in the balanced basis the factors are plain block patterns
d = dec.d
for name in ("M", "N"):
    X = fac.block_factors[name]
    pattern = [["#" if np.any(X[r * d:(r + 1) * d, c * d:(c + 1) * d]) else "." for c in range(3)]
               for r in range(3)]
    print(name, " ".join("".join(row) for row in pattern))
