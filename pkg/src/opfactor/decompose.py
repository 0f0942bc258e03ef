"""Almost-null sequences, triple decompositions and canonical block forms.

The ambient space is split as ``U1 (+) U2 (+) U3`` where ``T`` is small on
``U1`` and ``T*`` is small on ``U3``. After removing the upper-right block
and the two diagonal corners, ``T`` takes the shape

    [[0, A, 0],
     [K, C, D],
     [0, L, 0]]

with ``K`` and ``L`` small. Corners that cannot be removed by shrinking
``U1``/``U3`` are removed by zero-padding the space and placing padded
coordinates in the outer parts (the padded operator is ``T (+) 0``).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReduction, SpaceTooSmall, SemiFredholmObstruction
from .linalg import (
    as_matrix, op_norm, orth_complement, psd_sqrt, smallest_singular_pair, svd,
)


@dataclass
class TripleDecomposition:
    U1: np.ndarray
    U2: np.ndarray
    U3: np.ndarray
    labels: dict = field(default_factory=dict)

    @property
    def dims(self):
        return (self.U1.shape[1], self.U2.shape[1], self.U3.shape[1])

    @property
    def basis(self):
        return np.hstack([self.U1, self.U2, self.U3])

    def blocks(self, T):
        """3x3 nested list of the blocks of ``T`` in this decomposition."""
        parts = (self.U1, self.U2, self.U3)
        return [[P.conj().T @ T @ Q for Q in parts] for P in parts]

    def cross_inner_max(self):
        B = self.basis
        G = B.conj().T @ B - np.eye(B.shape[1])
        return float(np.max(np.abs(G))) if G.size else 0.0

    def with_parts(self, U1, U2, U3, **labels):
        new = dict(self.labels)
        new.update(labels)
        return TripleDecomposition(U1, U2, U3, new)


@dataclass
class AlmostNull:
    """Interleaved orthonormal vectors ``f_1, g_1, f_2, g_2, ...``."""

    f: np.ndarray
    g: np.ndarray
    f_norms: list
    g_norms: list
    eps: list


def _stack(Ts):
    return np.vstack([as_matrix(T) for T in Ts])


def default_eps(norm, k):
    """Threshold schedule ``||T|| / (n + 1)`` for ``n = 1..k``."""
    return [norm / (n + 1) for n in range(1, k + 1)]


def _interleaved(left, right, k, eps):
    n = left.shape[1]
    chosen = np.zeros((n, 0), dtype=complex)
    f, g, fv, gv = [], [], [], []
    for step in range(1, k + 1):
        thr = eps[step - 1]
        for side, op, vals, out in (("f", left, fv, f), ("g", right, gv, g)):
            val, x = smallest_singular_pair(op, chosen)
            if val > thr:
                raise SemiFredholmObstruction(step, side, val, thr)
            vals.append(val)
            out.append(x)
            chosen = np.column_stack([chosen, x])
    F = np.column_stack(f) if f else np.zeros((n, 0), dtype=complex)
    G = np.column_stack(g) if g else np.zeros((n, 0), dtype=complex)
    return AlmostNull(F, G, fv, gv, list(eps[:k]))


def joint_almost_null(Ts, k, eps=None):
    """Almost-null sequence for the family: ``||T_i f_n||`` and ``||T_i* g_n||`` small.

    The minimized quantities are ``||A f||`` and ``||B g||`` for
    ``A = sqrt(sum T_i* T_i)`` and ``B = sqrt(sum T_i T_i*)``; these equal the
    norms of the stacked operators, which are used directly.
    """
    left = _stack(Ts)
    right = _stack([as_matrix(T).conj().T for T in Ts])
    n = left.shape[1]
    if 2 * k >= n:
        raise SpaceTooSmall(f"cannot fit {2 * k} orthonormal vectors in dimension {n}")
    if eps is None:
        eps = default_eps(op_norm(left), k)
    if len(eps) < k:
        raise ValueError("eps schedule shorter than k")
    return _interleaved(left, right, k, eps)


def interleaved_almost_null(T, k, eps=None):
    """Orthonormal ``f_n``, ``g_n`` with ``||T f_n||, ||T* g_n|| <= eps_n``.

    Each vector minimizes the relevant norm over the orthogonal complement
    of all previously chosen vectors.

    Raises
    ------
    SemiFredholmObstruction
        When some constrained minimum exceeds its threshold.
    """
    return joint_almost_null([T], k, eps)


def _triple_from(an, n, **labels):
    U1, U3 = an.f, an.g
    U2 = orth_complement(np.hstack([U1, U3]), n)
    lab = {"U1": "almost-null for T", "U3": "almost-null for T*",
           "eps": an.eps, "f_norms": an.f_norms, "g_norms": an.g_norms}
    lab.update(labels)
    return TripleDecomposition(U1, U2, U3, lab)


def joint_triple_decomposition(Ts, k, eps=None):
    n = as_matrix(Ts[0]).shape[1]
    if n < 3 * k:
        raise SpaceTooSmall(f"dimension {n} < 3k = {3 * k}")
    an = joint_almost_null(Ts, k, eps)
    dec = _triple_from(an, n)
    dec.labels["middle_policy_ok"] = dec.dims[1] >= dec.dims[0] + dec.dims[2]
    return dec


def triple_decomposition(T, k, eps=None):
    """``U1 = span(f)``, ``U3 = span(g)``, ``U2`` the joint complement.

    The corner blocks ``U1* T U1``, ``U2* T U1``, ``U3* T U1`` and
    ``U3* T U2``, ``U3* T U3`` are bounded by the sum of the thresholds.
    ``labels["middle_policy_ok"]`` flags whether ``dim U2 >= dim U1 + dim U3``.
    """
    return joint_triple_decomposition([T], k, eps)


def _reduction_tol(T, tol):
    return tol * (1.0 + op_norm(T))


def zero_upper_right(T, dec, tol=1e-13):
    """Shrink ``U1`` so that the block ``U1* T U3`` vanishes.

    The range of that block inside ``U1`` is moved to the middle part.

    Raises
    ------
    DegenerateReduction
        If the block has full rank on ``U1`` (nothing of ``U1`` would remain).
    """
    T = as_matrix(T)
    U1, U2, U3 = dec.U1, dec.U2, dec.U3
    B = U1.conj().T @ T @ U3
    if B.size == 0:
        return dec
    res = svd(B, full=True)
    r = int(np.sum(res.values > _reduction_tol(T, tol)))
    if r == 0:
        return dec
    if r >= U1.shape[1]:
        raise DegenerateReduction(
            f"upper-right block has rank {r} = dim U1; enlarge U1 or pad the space")
    M2 = U1 @ res.left[:, :r]
    M1 = U1 @ res.left[:, r:]
    return dec.with_parts(M1, np.hstack([M2, U2]), U3)


def multi_zero_upper_right(Ts, dec, tol=1e-13):
    """Apply :func:`zero_upper_right` for each operator in turn."""
    for T in Ts:
        dec = zero_upper_right(T, dec, tol)
    return dec


def zero_lower_left(T, dec, tol=1e-13):
    """Shrink ``U3`` so that the block ``U3* T U1`` vanishes."""
    T = as_matrix(T)
    U1, U2, U3 = dec.U1, dec.U2, dec.U3
    K3 = U3.conj().T @ T @ U1
    if K3.size == 0:
        return dec
    res = svd(K3, full=True)
    r = int(np.sum(res.values > _reduction_tol(T, tol)))
    if r == 0:
        return dec
    if r >= U3.shape[1]:
        raise DegenerateReduction(f"lower-left block has rank {r} = dim U3")
    N1 = U3 @ res.left[:, :r]
    N2 = U3 @ res.left[:, r:]
    return dec.with_parts(U1, np.hstack([U2, N1]), N2)


@dataclass
class CanonicalForm:
    """Blocks of ``V T_pad V^-1`` in the shape ``[[0, A, 0], [K, C, D], [0, L, 0]]``.

    ``V`` is unitary (``V_inv = V*``); ``T_pad`` is ``T`` followed by
    ``padding["total"]`` zero rows and columns.
    """

    A: np.ndarray
    K: np.ndarray
    C: np.ndarray
    D: np.ndarray
    L: np.ndarray
    B: np.ndarray
    V: np.ndarray
    V_inv: np.ndarray
    dims: tuple
    n_original: int
    padding: dict
    decomposition: TripleDecomposition
    residual: float
    compactness: dict

    def assemble(self):
        d1, d2, d3 = self.dims
        Z = np.zeros
        return np.block([
            [Z((d1, d1)), self.A, Z((d1, d3))],
            [self.K, self.C, self.D],
            [Z((d3, d1)), self.L, Z((d3, d3))],
        ])

    def padded(self, T):
        from .linalg import pad_with_zero
        return pad_with_zero(T, self.padding["total"])


@dataclass
class JointCanonicalForm:
    V: np.ndarray
    V_inv: np.ndarray
    dims: tuple
    forms: list

    def __len__(self):
        return len(self.forms)


def _sv(M):
    return [float(s) for s in svd(M).values] if M.size else []


def joint_canonical_form(Ts, k=None, eps=None, corner_tol=1e-12, balance=False):
    """Common canonical form for a family of operators.

    Parameters
    ----------
    Ts : list of (n, n) arrays
    k : int, optional
        Length of the almost-null sequence; defaults to ``max(1, n // 4)``.
    eps : list of float, optional
        Threshold schedule (defaults to ``||stack|| / (j + 1)``).
    corner_tol : float
        Diagonal corners with norm below ``corner_tol * (1 + ||T_i||)`` are
        treated as zero; larger corners trigger padding.
    balance : bool
        Pad so that all three parts have equal dimension.
    """
    Ts = [as_matrix(T) for T in Ts]
    n = Ts[0].shape[0]
    if k is None:
        k = max(1, n // 4)
    dec = joint_triple_decomposition(Ts, k, eps)
    try:
        dec = multi_zero_upper_right(Ts, dec)
        b_reduced = True
    except DegenerateReduction:
        b_reduced = False

    def corner_big(parts):
        P = parts
        return any(op_norm(P.conj().T @ T @ P) > corner_tol * (1 + op_norm(T)) for T in Ts)

    pad_left = not b_reduced or corner_big(dec.U1)
    pad_right = corner_big(dec.U3)
    if not pad_left and not pad_right:
        try:
            for T in Ts:
                dec = zero_lower_left(T, dec)
        except DegenerateReduction:
            pad_right = True

    U1, U2, U3 = dec.U1, dec.U2, dec.U3
    p1 = U1.shape[1] if pad_left else 0
    p3 = U3.shape[1] if pad_right else 0
    middle = [U2]
    if pad_left:
        middle.insert(0, U1)
    if pad_right:
        middle.append(U3)
    H2_orig = np.hstack(middle)
    H1_orig = np.zeros((n, 0), dtype=complex) if pad_left else U1
    H3_orig = np.zeros((n, 0), dtype=complex) if pad_right else U3

    d = [H1_orig.shape[1] + p1, H2_orig.shape[1], H3_orig.shape[1] + p3]
    extra = [0, 0, 0]
    if balance:
        m = max(d)
        extra = [m - x for x in d]
        d = [m, m, m]
    total = p1 + p3 + sum(extra)
    N = n + total

    pad_next = n
    def embed(U):
        out = np.zeros((N, U.shape[1]), dtype=complex)
        out[:n] = U
        return out

    def pads(count):
        nonlocal pad_next
        out = np.zeros((N, count), dtype=complex)
        out[pad_next + np.arange(count), np.arange(count)] = 1.0
        pad_next += count
        return out

    P1 = np.hstack([embed(H1_orig), pads(p1 + extra[0])])
    P2 = np.hstack([embed(H2_orig), pads(extra[1])])
    P3 = np.hstack([embed(H3_orig), pads(p3 + extra[2])])
    Bm = np.hstack([P1, P2, P3])
    V = Bm.conj().T
    V_inv = Bm
    d1, d2, d3 = d
    s1, s2 = slice(0, d1), slice(d1, d1 + d2)
    s3 = slice(d1 + d2, N)
    padding = {"b_reduced": b_reduced, "left": p1, "right": p3, "balance": extra, "total": total,
               "pad_left": pad_left, "pad_right": pad_right}
    new_dec = TripleDecomposition(P1, P2, P3, dict(dec.labels, padding=padding))

    forms = []
    for T in Ts:
        Tp = np.zeros((N, N), dtype=complex)
        Tp[:n, :n] = T
        X = V @ Tp @ V_inv
        cf = CanonicalForm(
            A=X[s1, s2], K=X[s2, s1], C=X[s2, s2], D=X[s2, s3], L=X[s3, s2],
            B=X[s1, s3], V=V, V_inv=V_inv, dims=(d1, d2, d3), n_original=n,
            padding=padding, decomposition=new_dec, residual=0.0, compactness={},
        )
        cf.residual = float(np.linalg.norm(X - cf.assemble(), 2) / (1 + op_norm(T)))
        cf.compactness = {
            "K_singular_values": _sv(cf.K),
            "L_singular_values": _sv(cf.L),
            "eps": list(dec.labels.get("eps", [])),
            "eps_sum": float(sum(dec.labels.get("eps", []))),
        }
        forms.append(cf)
    return JointCanonicalForm(V, V_inv, (d1, d2, d3), forms)


def canonical_form(T, k=None, eps=None, corner_tol=1e-12, balance=False):
    """Canonical form of a single operator; see :func:`joint_canonical_form`."""
    return joint_canonical_form([T], k, eps, corner_tol, balance).forms[0]


def joint_sqrt_operators(Ts):
    """``(sqrt(sum T_i* T_i), sqrt(sum T_i T_i*))``."""
    Ts = [as_matrix(T) for T in Ts]
    A = psd_sqrt(sum(T.conj().T @ T for T in Ts))
    B = psd_sqrt(sum(T @ T.conj().T for T in Ts))
    return A, B
