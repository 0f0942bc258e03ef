"""Dense complex linear algebra primitives.

Every operator in the package is carried as a 2-D ``complex128`` array.
Subspaces are arrays whose columns are orthonormal. Thresholds on singular
values are always of the form ``tol * (1 + ||A||_2)``.
"""

from typing import NamedTuple

import numpy as np

from .errors import ConvergenceFailure, EmptyComplement

DEFAULT_TOL = 1e-9


class SvdResult(NamedTuple):
    left: np.ndarray
    values: np.ndarray
    right: np.ndarray

    def reconstruct(self):
        return (self.left * self.values) @ self.right.conj().T


def as_matrix(A):
    """Return ``A`` as a finite 2-D complex array (a copy is not forced)."""
    M = np.asarray(A, dtype=complex)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def adjoint(A):
    return np.asarray(A).conj().T


def op_norm(A):
    """Spectral norm; 0 for empty matrices."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def threshold(A, tol=DEFAULT_TOL):
    return tol * (1.0 + op_norm(A))


def svd(A, full=False):
    """Thin (or full) SVD with non-increasing singular values.

    Raises
    ------
    ConvergenceFailure
        If LAPACK does not converge.
    """
    A = as_matrix(A)
    m, n = A.shape
    if A.size == 0:
        return SvdResult(np.eye(m, m if full else 0, dtype=complex),
                         np.zeros(0), np.eye(n, n if full else 0, dtype=complex))
    try:
        U, s, Vh = np.linalg.svd(A, full_matrices=full)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return SvdResult(U, s, Vh.conj().T)


def canonical_basis(S, cutoff=1e-8):
    """Deterministic orthonormal basis of ``span(S)``.

    Standard basis vectors are projected onto the subspace in index order and
    Gram-Schmidt orthogonalized; lower coordinates are preferred. The result
    does not depend on which orthonormal basis ``S`` is given in.
    """
    S = np.asarray(S, dtype=complex)
    n, r = S.shape
    if r == 0:
        return np.zeros((n, 0), dtype=complex)
    P = S @ S.conj().T
    Q = np.zeros((n, r), dtype=complex)
    k = 0
    for m in range(n):
        v = P[:, m].copy()
        for _ in range(2):
            v -= Q[:, :k] @ (Q[:, :k].conj().T @ v)
        nv = np.linalg.norm(v)
        if nv > cutoff:
            Q[:, k] = v / nv
            k += 1
            if k == r:
                break
    # re-project once more onto the subspace to clean drift
    Q = S @ (S.conj().T @ Q[:, :k])
    q, _ = np.linalg.qr(Q)
    # fix phases so the first significant coordinate is real positive
    for j in range(q.shape[1]):
        col = q[:, j]
        idx = int(np.argmax(np.abs(col) > 1e-8 * np.abs(col).max()))
        ph = col[idx] / abs(col[idx])
        q[:, j] = col / ph
    return q


def kernel_basis(A, tol=DEFAULT_TOL):
    """Orthonormal basis of the numerical kernel of ``A``.

    Right singular vectors whose singular value is at most
    ``tol * (1 + ||A||_2)``; columns of a wide matrix beyond its row count are
    included with singular value 0.
    """
    A = as_matrix(A)
    m, n = A.shape
    res = svd(A, full=True)
    s = np.zeros(n)
    s[: len(res.values)] = res.values
    keep = s <= threshold(A, tol)
    return canonical_basis(res.right[:, keep])


def cokernel_basis(A, tol=DEFAULT_TOL):
    return kernel_basis(adjoint(as_matrix(A)), tol)


def range_basis(A, tol=DEFAULT_TOL):
    """Orthonormal basis of the numerical range (left singular vectors above threshold)."""
    A = as_matrix(A)
    if A.size == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    res = svd(A)
    keep = res.values > threshold(A, tol)
    return res.left[:, keep]


def rank(A, tol=DEFAULT_TOL):
    return range_basis(A, tol).shape[1]


def orth_complement(S, n=None):
    """Orthonormal basis of the orthogonal complement of ``span(S)`` in C^n."""
    S = np.asarray(S, dtype=complex)
    if n is None:
        n = S.shape[0]
    if S.shape[1] == 0:
        return np.eye(n, dtype=complex)
    Q, _ = np.linalg.qr(S, mode="complete")
    return Q[:, S.shape[1]:]


def pad_with_zero(A, p):
    """Direct sum ``A (+) 0_p``."""
    if p < 0:
        raise ValueError("padding must be non-negative")
    A = as_matrix(A)
    m, n = A.shape
    out = np.zeros((m + p, n + p), dtype=complex)
    out[:m, :n] = A
    return out


def smallest_singular_pair(A, constraint=None, tie_tol=1e-12):
    """Minimize ``||A x||`` over unit vectors ``x`` orthogonal to ``constraint``.

    Returns ``(value, x)``. Among (numerically) tied minimizers the vector
    closest to the lowest-index coordinate direction is returned.

    Raises
    ------
    EmptyComplement
        If ``constraint`` spans the whole space.
    """
    A = as_matrix(A)
    n = A.shape[1]
    if constraint is None:
        constraint = np.zeros((n, 0), dtype=complex)
    constraint = np.asarray(constraint, dtype=complex)
    if constraint.shape[1] >= n:
        raise EmptyComplement("constraint spans the whole space")
    C = orth_complement(constraint, n)
    AC = A @ C
    res = svd(AC, full=True)
    s = np.zeros(C.shape[1])
    s[: len(res.values)] = res.values
    smax = s[0] if len(s) else 0.0
    tied = s <= s[-1] + tie_tol * (1.0 + smax)
    S = C @ res.right[:, tied]
    x = canonical_basis(S)[:, 0]
    # keep exactly orthogonal to the constraint
    x -= constraint @ (constraint.conj().T @ x)
    x /= np.linalg.norm(x)
    return float(np.linalg.norm(A @ x)), x


def psd_sqrt(P):
    """Square root of a positive semidefinite matrix.

    The input is symmetrized first and negative eigenvalues are clipped to 0.
    """
    P = as_matrix(P)
    H = 0.5 * (P + P.conj().T)
    w, U = np.linalg.eigh(H)
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.conj().T


def is_orthonormal(B, tol=1e-12):
    B = np.asarray(B)
    if B.shape[1] == 0:
        return True
    G = B.conj().T @ B
    return bool(np.max(np.abs(G - np.eye(B.shape[1]))) <= tol)


def nilpotency_index(X, tol=1e-12, max_index=None):
    """Least ``k`` with ``||X^k||_F <= tol * (1 + ||X||_2)^k``; ``None`` if not found."""
    X = as_matrix(X)
    n = X.shape[0]
    if max_index is None:
        max_index = n + 1
    nx = 1.0 + op_norm(X)
    P = np.eye(n, dtype=complex)
    for k in range(1, max_index + 1):
        P = P @ X
        if np.linalg.norm(P) <= tol * nx**k:
            return k
    return None


def random_unitary(n, rng):
    """Haar-distributed unitary from a ``numpy.random.Generator``."""
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))
