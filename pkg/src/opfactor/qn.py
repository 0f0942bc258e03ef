"""Quasi-nilpotent factorizations.

* :func:`factor_quasinilpotent` writes an operator in canonical form as a
  product ``Q1 Q2`` of two block operators that are quasi-nilpotent by a
  triangular-corner argument.
* :func:`common_right_factor_compact` and friends give common weighted-shift
  factors ``K_i = L_i Q`` for families of compact operators.
* :func:`common_factor_general` gives ``V T_i V^-1 = Q1' S_i' Q2'`` for
  families in a joint canonical form.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import blockop
from .blockop import (
    INF, BlockOperator, BlockShape, Region, col_ray, compose, dense_power_norms,
    gelfand_estimate, row_ray, triangular_qn_certificate, weighted_diag_qn_bound,
)
from .decompose import joint_canonical_form
from .errors import NotEssentiallySingular, RangeInclusionFailed, ShapeMismatch, SplitTooShallow
from .linalg import as_matrix, op_norm, svd

DEFAULT_BASE = 4.0
DEFAULT_SCALE = 2.0


# ---------------------------------------------------------------------------
# decay splittings


@dataclass
class CompactSplit:
    """Orthonormal pieces (columns of each array) with per-piece norm bounds."""

    pieces: list
    bounds: list
    side: str
    base: float

    @property
    def dims(self):
        return [p.shape[1] for p in self.pieces]

    def nonempty(self):
        return sum(1 for p in self.pieces if p.shape[1] > 0)


def _bin_index(s, base):
    if s > base**-2:
        return 1
    n = 2
    while s <= base ** -(n + 1):
        n += 1
    return n


def _split(vectors, values, base, side):
    n_vec = vectors.shape[1]
    s = np.zeros(n_vec)
    s[: len(values)] = values
    idx = [None if v == 0.0 else _bin_index(v, base) for v in s]
    top = max((i for i in idx if i is not None), default=1)
    # null directions carry no norm; they join the deepest piece
    idx = [top if i is None else i for i in idx]
    pieces, bounds = [], []
    for n in range(1, top + 1):
        sel = [k for k, i in enumerate(idx) if i == n]
        pieces.append(vectors[:, sel])
        bounds.append(float(max((s[k] for k in sel), default=0.0)))
    return CompactSplit(pieces, bounds, side, base)


def split_compact_domain(K, base=DEFAULT_BASE):
    """Split the domain of ``K`` into pieces on which ``||K|| <= base**-n`` (``n >= 2``).

    Piece 1 holds the right singular vectors with ``sigma > base**-2``;
    piece ``n`` those with ``sigma`` in ``(base**-(n+1), base**-n]``.
    Exact null directions are put in the last piece.
    """
    if base <= 1:
        raise ValueError("base must exceed 1")
    K = as_matrix(K)
    res = svd(K, full=True)
    return _split(res.right, res.values, base, "domain")


def split_compact_range(L, base=DEFAULT_BASE):
    """Mirror of :func:`split_compact_domain` using left singular vectors of ``L``."""
    if base <= 1:
        raise ValueError("base must exceed 1")
    L = as_matrix(L)
    res = svd(L, full=True)
    return _split(res.left, res.values, base, "range")


def _merge_tail(split, pieces):
    if len(split.pieces) <= pieces:
        extra = pieces - len(split.pieces)
        n = split.pieces[0].shape[0]
        return (split.pieces + [np.zeros((n, 0), dtype=complex)] * extra,
                split.bounds + [0.0] * extra)
    head = split.pieces[: pieces - 1]
    tail = np.hstack(split.pieces[pieces - 1:])
    bounds = split.bounds[: pieces - 1] + [max(split.bounds[pieces - 1:])]
    return head + [tail], bounds


# ---------------------------------------------------------------------------
# refined operator and the two-factor construction


def _pad_to(M, rows, cols):
    out = np.zeros((rows, cols), dtype=complex)
    out[: M.shape[0], : M.shape[1]] = M
    return out


@dataclass
class RefinedForm:
    """Canonical form with ``H1`` and ``H3`` cut into pieces of one size ``b``.

    Block index ``-n`` is the ``n``-th piece of ``H1``, ``0`` is ``H2`` and
    ``+n`` the ``n``-th piece of ``H3``. Lists are indexed from piece 1.
    """

    A: list
    K: list
    C: np.ndarray
    D: list
    L: list
    block_dim: int
    embedding: np.ndarray = None
    splits: tuple = ()

    @property
    def pieces(self):
        return len(self.K)

    def shape(self):
        return BlockShape(self.block_dim)

    def max_block_norm(self):
        mats = self.A + self.K + self.D + self.L + [self.C]
        return max(op_norm(M) for M in mats)

    def operator(self):
        """The refined operator as a :class:`BlockOperator`."""
        P = self.pieces

        def blocks(i, j):
            if i == 0 and j == 0:
                return self.C
            if j == 0 and -P <= i <= -1:
                return self.A[-i - 1]
            if j == 0 and 1 <= i <= P:
                return self.L[i - 1]
            if i == 0 and -P <= j <= -1:
                return self.K[-j - 1]
            if i == 0 and 1 <= j <= P:
                return self.D[j - 1]
            return None

        support = (col_ray(0, (-P, P)), row_ray(0, (-P, P)))
        return BlockOperator(self.shape(), self.shape(), support, blocks, name="T")


def refine(cf, base=DEFAULT_BASE, pieces=None, min_nonempty=1):
    """Cut ``H1`` by the decay of ``K`` and ``H3`` by the decay of ``L``.

    Parameters
    ----------
    cf : CanonicalForm
    pieces : int, optional
        Number of pieces per side; trailing pieces are merged into the last
        one (which keeps its bound) or added empty.
    min_nonempty : int
        Minimum number of nonempty pieces per side.

    Raises
    ------
    SplitTooShallow
    """
    dsplit = split_compact_domain(cf.K, base)
    rsplit = split_compact_range(cf.L, base)
    if pieces is None:
        pieces = max(len(dsplit.pieces), len(rsplit.pieces))
    for sp in (dsplit, rsplit):
        if sp.nonempty() < min_nonempty:
            raise SplitTooShallow(
                f"{sp.side} split has {sp.nonempty()} nonempty pieces, need {min_nonempty}")
    F, fb = _merge_tail(dsplit, pieces)
    G, gb = _merge_tail(rsplit, pieces)
    d1, d2, d3 = cf.dims
    b = max([d2] + [f.shape[1] for f in F] + [g.shape[1] for g in G] + [1])
    A = [_pad_to(f.conj().T @ cf.A, b, b) for f in F]
    K = [_pad_to(cf.K @ f, b, b) for f in F]
    D = [_pad_to(cf.D @ g, b, b) for g in G]
    L = [_pad_to(g.conj().T @ cf.L, b, b) for g in G]
    C = _pad_to(cf.C, b, b)

    N = d1 + d2 + d3
    nb = 2 * pieces + 1
    Phi = np.zeros((N, nb * b), dtype=complex)
    for n in range(1, pieces + 1):
        col = (pieces - n) * b
        Phi[:d1, col:col + F[n - 1].shape[1]] = F[n - 1]
        col = (pieces + n) * b
        Phi[d1 + d2:, col:col + G[n - 1].shape[1]] = G[n - 1]
    col = pieces * b
    Phi[d1:d1 + d2, col:col + d2] = np.eye(d2)
    split_info = (CompactSplit(F, fb, "domain", base), CompactSplit(G, gb, "range", base))
    return RefinedForm(A, K, C, D, L, b, Phi, split_info)


@dataclass
class QNFactorization:
    Q1: BlockOperator
    Q2: BlockOperator
    T: BlockOperator
    product_residual: float
    relative_residual: float
    cert_Q1: blockop.Certificate
    cert_Q2: blockop.Certificate
    bound_Q1: blockop.BoundReport
    bound_Q2: blockop.BoundReport
    window: int
    refined: RefinedForm = None
    scale: float = DEFAULT_SCALE

    @property
    def valid(self):
        return (self.cert_Q1.valid and self.cert_Q2.valid and self.bound_Q1.passed
                and self.bound_Q2.passed)


def q_factors(rf, scale=DEFAULT_SCALE):
    """The two block factors for a refined form.

    ``Q1``: ``(0, -k) = scale^-(k-1) I``, ``(0, 1) = C``, ``(-n, 1) = A_n``,
    ``(n, n+1) = scale^n L_n``.
    ``Q2``: ``(-1, n) = D_n``, ``(-(n+1), -n) = scale^n K_n``,
    ``(k, 0) = scale^-(k-1) I``.
    """
    P = rf.pieces
    b = rf.block_dim
    shape = rf.shape()
    eye = np.eye(b, dtype=complex)

    def q1(i, j):
        if i == 0 and j <= -1:
            return scale ** (j + 1) * eye
        if i == 0 and j == 1:
            return rf.C
        if j == 1 and -P <= i <= -1:
            return rf.A[-i - 1]
        if 1 <= i <= P and j == i + 1:
            return scale**i * rf.L[i - 1]
        return None

    def q2(i, j):
        if i == -1 and 1 <= j <= P:
            return rf.D[j - 1]
        if -P <= j <= -1 and i == j - 1:
            return scale ** (-j) * rf.K[-j - 1]
        if j == 0 and i >= 1:
            return scale ** (-(i - 1)) * eye
        return None

    sup1 = (row_ray(0, (-INF, -1)), blockop.point(0, 1), col_ray(1, (-P, -1)),
            Region((1, P), (-INF, INF), (1, 1)))
    sup2 = (row_ray(-1, (1, P)), Region((-INF, INF), (-P, -1), (1, 1)), col_ray(0, (1, INF)))
    return (BlockOperator(shape, shape, sup1, q1, name="Q1"),
            BlockOperator(shape, shape, sup2, q2, name="Q2"))


Q1_SPLIT = ((-INF, 0), (1, INF))
Q2_SPLIT = ((-INF, -1), (0, INF))


def blockwise_residual(X, Y, window):
    """``max ||X(i,j) - Y(i,j)||_2`` over ``|i|, |j| <= window``."""
    worst = 0.0
    for i in range(-window, window + 1):
        for j in range(-window, window + 1):
            a, c = X.block(i, j), Y.block(i, j)
            if a is None and c is None:
                continue
            if a is None:
                a = np.zeros_like(c)
            if c is None:
                c = np.zeros_like(a)
            worst = max(worst, op_norm(a - c))
    return worst


def factor_refined(rf, window=None, scale=DEFAULT_SCALE, n_max=20, threshold=1e-2,
                   bound_n_max=10):
    """Factor a refined form as ``T = Q1 Q2`` and certify both factors."""
    if window is None:
        window = rf.pieces
    Q1, Q2 = q_factors(rf, scale)
    T = rf.operator()
    prod = compose(Q1, Q2)
    res = blockwise_residual(prod, T, window)
    rel = res / (1.0 + rf.max_block_norm())
    c1 = triangular_qn_certificate(Q1, Q1_SPLIT, window, n_max, threshold)
    c2 = triangular_qn_certificate(Q2, Q2_SPLIT, window, n_max, threshold)
    b1 = weighted_diag_qn_bound(rf.L, scale, bound_n_max)
    b2 = weighted_diag_qn_bound([K.conj().T for K in rf.K], scale, bound_n_max)
    return QNFactorization(Q1, Q2, T, res, rel, c1, c2, b1, b2, window, rf, scale)


def factor_quasinilpotent(cf, window=None, base=DEFAULT_BASE, pieces=None, min_nonempty=1,
                          scale=DEFAULT_SCALE, n_max=20, threshold=1e-2):
    """``T = Q1 Q2`` with both factors quasi-nilpotent, starting from a canonical form.

    Raises
    ------
    SplitTooShallow
        If either side has fewer than ``min_nonempty`` nonempty pieces.
    """
    if op_norm(cf.B) > 1e-12 * (1 + op_norm(cf.assemble())):
        raise ValueError("canonical form still has a nonzero upper-right block")
    rf = refine(cf, base, pieces, min_nonempty)
    return factor_refined(rf, window, scale, n_max, threshold)


# ---------------------------------------------------------------------------
# common factors of compact families


@dataclass
class ShiftFactorization:
    """Weighted shift ``Q`` in the basis ``phi`` plus one cofactor per operator.

    For ``side == "right"``: ``K_i = L_i Q`` and ``Q phi_j = w_j phi_{j+1}``.
    For ``side == "left"``: ``K_i = Q L_i`` and ``Q`` is the adjoint shift.
    """

    basis: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    Q: np.ndarray
    cofactors: list
    side: str
    residuals: list = field(default_factory=list)

    def shift_matrix(self):
        m = len(self.weights)
        S = np.zeros((m, m), dtype=complex)
        if m > 1:
            S[np.arange(1, m), np.arange(m - 1)] = self.weights[:-1]
        return S if self.side == "right" else S.conj().T

    def power_norms(self, n_max):
        """Exact power norms computed in the eigenbasis (bidiagonal, no cancellation)."""
        return blockop.PowerNormSequence(tuple(dense_power_norms(self.shift_matrix(), n_max)), 0)

    def gelfand(self, n_max):
        return gelfand_estimate(self.power_norms(n_max))

    def power_identity(self, m_cap=20):
        """Rows ``(m, ||Q^2m||, (lam_1...lam_2m)^(1/4), (lam_1 lam_(m+1))^(m/4))``.

        ``||Q^2m||`` is taken in the eigenbasis, where ``Q`` is bidiagonal and
        its powers carry plain products of weights. Products are formed in
        log space to avoid underflow.
        """
        lam = self.eigenvalues
        dim = len(lam)
        S = self.shift_matrix()
        with np.errstate(divide="ignore"):
            loglam = np.log(lam)
        rows = []
        P = np.eye(dim, dtype=complex)
        for m in range(1, m_cap + 1):
            if 2 * m > dim - 1:
                break
            P = P @ S @ S
            exact = float(np.exp(0.25 * np.sum(loglam[: 2 * m])))
            bound = float(np.exp(m / 4 * (loglam[0] + loglam[m])))
            rows.append((m, op_norm(P), exact, bound))
        return rows

    def cofactor_column_bound(self, slack=1e-12):
        """Worst ``||L_i phi_j||^2 - sqrt(lam_(j-1))`` over ``i`` and ``j > 1``."""
        if self.side != "right":
            raise ValueError("bound is stated for the right factorization")
        worst = -INF
        lam = self.eigenvalues
        for Li in self.cofactors:
            cols = Li @ self.basis
            sq = np.sum(np.abs(cols) ** 2, axis=0)
            for j in range(1, len(lam)):
                worst = max(worst, float(sq[j] - math.sqrt(lam[j - 1])))
        return worst


def common_right_factor_compact(Ks, zero_tol=0.0):
    """``K_i = L_i Q`` with ``Q`` a weighted shift in the eigenbasis of ``sum K_i* K_i``.

    The eigenbasis and eigenvalues come from the SVD of the stacked family,
    which resolves small eigenvalues to absolute accuracy.
    ``Q phi_j = lam_j^(1/4) phi_{j+1}``, the last basis vector maps to 0,
    ``L_i phi_1 = 0`` and ``L_i phi_j = lam_{j-1}^(-1/4) K_i phi_{j-1}``
    (0 when ``lam_{j-1}`` vanishes).
    """
    Ks = [as_matrix(K) for K in Ks]
    m = Ks[0].shape[1]
    for K in Ks:
        if K.shape != Ks[0].shape:
            raise ShapeMismatch("all operators must share one shape")
    res = svd(np.vstack(Ks), full=True)
    s = np.zeros(m)
    s[: len(res.values)] = res.values
    Phi = res.right
    lam = s**2
    w = np.sqrt(s)
    S = np.zeros((m, m), dtype=complex)
    if m > 1:
        S[np.arange(1, m), np.arange(m - 1)] = w[:-1]
    Q = Phi @ S @ Phi.conj().T
    cof = []
    for K in Ks:
        cols = np.zeros((K.shape[0], m), dtype=complex)
        for j in range(1, m):
            if w[j - 1] > zero_tol:
                cols[:, j] = (K @ Phi[:, j - 1]) / w[j - 1]
        cof.append(cols @ Phi.conj().T)
    resid = [op_norm(L @ Q - K) for L, K in zip(cof, Ks)]
    return ShiftFactorization(Phi, w, lam, Q, cof, "right", resid)


def common_left_factor_compact(Ks, zero_tol=0.0):
    """``K_i = Q L_i``: the right factorization of the adjoints, adjointed."""
    Ks = [as_matrix(K) for K in Ks]
    r = common_right_factor_compact([K.conj().T for K in Ks], zero_tol)
    Q = r.Q.conj().T
    cof = [L.conj().T for L in r.cofactors]
    resid = [op_norm(Q @ L - K) for L, K in zip(cof, Ks)]
    return ShiftFactorization(r.basis, r.weights, r.eigenvalues, Q, cof, "left", resid)


@dataclass
class TwoSidedCompact:
    Q1: np.ndarray
    cofactors: list
    Q2: np.ndarray
    right: ShiftFactorization
    left: ShiftFactorization
    residuals: list


def two_sided_compact(Ks):
    """``K_i = Q1 L_i Q2`` from a right factorization followed by a left one."""
    Ks = [as_matrix(K) for K in Ks]
    right = common_right_factor_compact(Ks)
    left = common_left_factor_compact(right.cofactors)
    Q1, Q2 = left.Q, right.Q
    resid = [op_norm(Q1 @ L @ Q2 - K) for L, K in zip(left.cofactors, Ks)]
    return TwoSidedCompact(Q1, left.cofactors, Q2, right, left, resid)


# ---------------------------------------------------------------------------
# general operators


def qq_star_factor(Tpos, decay_tol=1e-3, rel_tol=1e-10):
    """Quasi-nilpotent ``Q`` with ``Q Q* = Tpos^2`` up to the truncated tail.

    ``Q = U W U*`` with ``U`` the eigenvectors of ``Tpos`` (eigenvalues
    ``t_1 >= t_2 >= ...``) and ``W`` the backward shift ``W e_{j+1} = t_j e_j``.
    The dropped term is ``t_m^2``.

    Raises
    ------
    NotEssentiallySingular
        If the mean of the smallest quarter of the spectrum exceeds
        ``decay_tol * t_1``, or the dropped term exceeds ``rel_tol * t_1^2``.
    """
    P = as_matrix(Tpos)
    H = 0.5 * (P + P.conj().T)
    t, U = np.linalg.eigh(H)
    t, U = np.clip(t[::-1], 0.0, None), U[:, ::-1]
    m = len(t)
    if m == 0 or t[0] == 0.0:
        return np.zeros_like(P)
    q = max(1, math.ceil(m / 4))
    if np.mean(t[-q:]) > decay_tol * t[0]:
        raise NotEssentiallySingular(
            f"smallest-quartile mean {np.mean(t[-q:]):.3g} > {decay_tol:g} * {t[0]:.3g}")
    if t[-1] ** 2 > rel_tol * t[0] ** 2:
        raise NotEssentiallySingular(
            f"smallest eigenvalue {t[-1]:.3g} too large for a {rel_tol:g} truncation")
    W = np.zeros((m, m), dtype=complex)
    W[np.arange(m - 1), np.arange(1, m)] = t[:-1]
    return U @ W @ U.conj().T


def douglas_solve(Q, T, range_tol=1e-8, rcond=1e-13):
    """Minimum-norm ``S`` with ``Q S = T``, after checking ``range(T) <= range(Q)``.

    Raises
    ------
    RangeInclusionFailed
        If the part of ``T`` outside the numerical range of ``Q`` exceeds
        ``range_tol * (1 + ||T||)``.
    """
    Q, T = as_matrix(Q), as_matrix(T)
    res = svd(Q)
    keep = res.values > rcond * (res.values[0] if len(res.values) else 0.0)
    Ur = res.left[:, keep]
    outside = T - Ur @ (Ur.conj().T @ T)
    gap = op_norm(outside)
    if gap > range_tol * (1 + op_norm(T)):
        raise RangeInclusionFailed(f"range gap {gap:.3g} exceeds tolerance")
    S, *_ = np.linalg.lstsq(Q, T, rcond=rcond)
    return S


def common_left_factor_general(Ts, decay_tol=1e-3, range_tol=1e-8):
    """``T_i = Q S_i`` with ``Q`` quasi-nilpotent (needs ``sum T_i T_i*`` essentially singular)."""
    Ts = [as_matrix(T) for T in Ts]
    res = svd(np.hstack(Ts))
    Tpos = (res.left * res.values) @ res.left.conj().T
    Q = qq_star_factor(Tpos, decay_tol)
    S = [douglas_solve(Q, T, range_tol) for T in Ts]
    return Q, S


def common_right_factor_general(Ts, decay_tol=1e-3, range_tol=1e-8):
    """``T_i = S_i Q`` by duality with :func:`common_left_factor_general`."""
    Q, S = common_left_factor_general([as_matrix(T).conj().T for T in Ts], decay_tol, range_tol)
    return Q.conj().T, [X.conj().T for X in S]


@dataclass
class GeneralFactorization:
    """``V T_i V^-1 = Q1' S_i' Q2'`` and the pulled-back factors."""

    Q1p: np.ndarray
    Q2p: np.ndarray
    Sp: list
    Q1: np.ndarray
    Q2: np.ndarray
    S: list
    R: ShiftFactorization
    Q: ShiftFactorization
    residuals: list
    cube_offdiag: tuple
    cube_diag_error: tuple
    h_singular_values: list
    h_vectors: np.ndarray
    gelfand: tuple
    dims: tuple


def _cube_report(X, D, m):
    C3 = X @ X @ X
    off = 0.0
    for a in range(3):
        for b in range(3):
            blk = C3[a * m:(a + 1) * m, b * m:(b + 1) * m]
            if a == b:
                continue
            off = max(off, float(np.max(np.abs(blk))) if blk.size else 0.0)
    diag = max(float(np.max(np.abs(C3[a * m:(a + 1) * m, a * m:(a + 1) * m] - D)))
               if m else 0.0 for a in range(3))
    return off, diag


def factor_joint_form(jcf, h_count=4, n_max=40):
    """Three-factor decomposition of a balanced joint canonical form."""
    m = jcf.dims[0]
    if not (jcf.dims[0] == jcf.dims[1] == jcf.dims[2]):
        raise ShapeMismatch(f"joint canonical form is not balanced: {jcf.dims}")
    forms = jcf.forms
    right = common_right_factor_compact([f.K for f in forms])
    left = common_left_factor_compact([f.L for f in forms])
    Qm, Rm = right.Q, left.Q
    Z = np.zeros((m, m), dtype=complex)
    I = np.eye(m, dtype=complex)
    Q1p = np.block([[Z, I, Z], [Z, Z, I], [Rm, Z, Z]])
    Q2p = np.block([[Z, I, Z], [Z, Z, I], [Qm, Z, Z]])
    Sp = [np.block([[M, Z, Z], [f.A, Z, Z], [f.C, f.D, H]])
          for f, M, H in zip(forms, left.cofactors, right.cofactors)]
    residuals = []
    for f, S in zip(forms, Sp):
        target = f.assemble()
        residuals.append(op_norm(Q1p @ S @ Q2p - target) / (1 + op_norm(target)))
    off1, diag1 = _cube_report(Q1p, Rm, m)
    off2, diag2 = _cube_report(Q2p, Qm, m)
    V, Vi = jcf.V, jcf.V_inv
    stacked = np.vstack(Sp)
    sres = svd(stacked, full=True)
    n = stacked.shape[1]
    s = np.zeros(n)
    s[: len(sres.values)] = sres.values
    h = sres.right[:, n - h_count:][:, ::-1]
    return GeneralFactorization(
        Q1p, Q2p, Sp, Vi @ Q1p @ V, Vi @ Q2p @ V, [Vi @ S @ V for S in Sp],
        left, right, residuals, (off1, off2), (diag1, diag2),
        [float(x) for x in s[::-1][:h_count]], h,
        (left.gelfand(n_max), right.gelfand(n_max)), jcf.dims,
    )


def common_factor_general(Ts, k=None, h_count=4, n_max=40):
    """``T_i = Q1 S_i Q2`` for a family whose joint sums are essentially singular."""
    jcf = joint_canonical_form(Ts, k=k, balance=True)
    return factor_joint_form(jcf, h_count, n_max), jcf
