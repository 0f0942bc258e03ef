"""
One weighted shift shared by a compact family
=============================================

Stack a family of compact matrices, take the eigenbasis of ``sum K_i* K_i``
and build the weighted shift ``Q`` with weights ``lam_j^(1/4)``. Each member
then factors as ``K_i = L_i Q``.
"""

import numpy as np

from opfactor import common_right_factor_compact
from opfactor.linalg import random_unitary

rng = np.random.default_rng(3)
n = 60
lam = 4.0 ** -np.arange(1, n + 1)
W = random_unitary(n, rng)
Ks = [random_unitary(n, rng) * np.sqrt(lam / 2) @ W.conj().T for _ in range(2)]

sf = common_right_factor_compact(Ks)
print("residuals ||L_i Q - K_i||:", ["%.1e" % r for r in sf.residuals])

# ||Q^2m|| is the product of the first 2m weights
for m, norm, exact, bound in sf.power_identity(5):
    print(f"m={m}  ||Q^{2 * m}|| = {norm:.3e}  exact {exact:.3e}  bound {bound:.3e}")

print("Gelfand estimate at n=40:", sf.gelfand(40))
