"""Independent reference computations used by the tests.

Nothing here calls into opfactor; each oracle uses a different numpy route
from the library (eigendecompositions instead of SVDs, explicit loops
instead of block accessors).
"""

import numpy as np


def singular_values(A):
    """Singular values from the eigenvalues of A* A, sorted non-increasing."""
    A = np.asarray(A, dtype=complex)
    w = np.linalg.eigvalsh(A.conj().T @ A)
    return np.sqrt(np.clip(w[::-1], 0.0, None))


def numerical_rank(A, tol=1e-9):
    s = singular_values(A)
    return int(np.sum(s > tol * (1 + (s[0] if len(s) else 0.0))))


def min_over_complement(A, C):
    """min ||A x|| over unit x orthogonal to columns of C, via eigh of the compression."""
    n = A.shape[1]
    P = np.eye(n) - C @ np.linalg.pinv(C) if C.shape[1] else np.eye(n)
    w, V = np.linalg.eigh(P @ A.conj().T @ A @ P + 1e6 * (np.eye(n) - P))
    return float(np.sqrt(max(w[0], 0.0)))


def spectral_norm(A):
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.sqrt(max(np.linalg.eigvalsh(A.conj().T @ A).max(), 0.0)))


def dense_block_product(blocks_x, blocks_y, indices, b):
    """Blockwise product over a finite index set with explicit loops."""
    out = {}
    for i in indices:
        for j in indices:
            acc = np.zeros((b, b), dtype=complex)
            for k in indices:
                x = blocks_x.get((i, k))
                y = blocks_y.get((k, j))
                if x is not None and y is not None:
                    acc = acc + x @ y
            out[(i, j)] = acc
    return out


def cube(X):
    return X @ X @ X


def eigenvalue_moduli(X):
    return np.abs(np.linalg.eigvals(np.asarray(X, dtype=complex)))


def shift_power_norm(weights, p):
    """Norm of the p-th power of a forward weighted shift with the given weights."""
    w = np.asarray(weights, dtype=float)
    if p > len(w):
        return 0.0
    return float(max(np.prod(w[j:j + p]) for j in range(len(w) - p + 1)))
