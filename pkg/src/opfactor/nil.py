"""Factorizations into nilpotent matrices of index at most 3.

A matrix (or family) is written in a basis ``U1 (+) U2 (+) U3`` of equal
dimensions, with ``U1`` inside the (joint) kernel and ``U3`` inside the
(joint) cokernel, so that each ``T_i`` takes the shape

    [[0, A, 0],
     [0, C, D],
     [0, 0, 0]]

Zero padding supplies coordinates lying in both kernels whenever the
original dimensions cannot be balanced.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, Infeasible, KernelEmpty, ShapeMismatch
from .linalg import (
    as_matrix, canonical_basis, kernel_basis, nilpotency_index, op_norm,
    orth_complement, pad_with_zero, range_basis,
)

NIL_TOL = 1e-11


def _check_family(Ts):
    Ts = [as_matrix(T) for T in Ts]
    if not Ts:
        raise ValueError("need at least one operator")
    n = Ts[0].shape[0]
    for T in Ts:
        if T.shape != (n, n):
            raise ShapeMismatch(f"expected square {n}x{n} operators, got {T.shape}")
    return Ts


def _joint_kernels(Ts, tol):
    ker = kernel_basis(np.vstack(Ts), tol)
    coker = kernel_basis(np.vstack([T.conj().T for T in Ts]), tol)
    return ker, coker


def _u1_space(Ts, ker, U3):
    """Joint kernel vectors orthogonal to ``U3`` and every ``T_i U3``."""
    n = ker.shape[0]
    if U3.shape[1] == 0:
        return ker
    block = np.hstack([U3] + [T @ U3 for T in Ts])
    R = range_basis(block, 1e-14)
    if R.shape[1] == 0:
        return ker
    # ker ∩ R^perp is ker times the null space of R* ker
    k = kernel_basis(R.conj().T @ ker, 1e-12)
    return canonical_basis(ker @ k) if k.shape[1] else np.zeros((n, 0), dtype=complex)


@dataclass
class BalancePlan:
    """Dimensions and real subspaces chosen for a balanced decomposition."""

    n: int
    d: int
    padding: int
    pad_assignment: dict
    U1: np.ndarray
    U3: np.ndarray
    kernel_dim: int
    cokernel_dim: int

    def to_json(self):
        return {"n": self.n, "d": self.d, "padding": self.padding,
                "assignment": self.pad_assignment, "kernel_dim": self.kernel_dim,
                "cokernel_dim": self.cokernel_dim,
                "real_dims": [self.U1.shape[1], self.n - self.U1.shape[1] - self.U3.shape[1],
                              self.U3.shape[1]]}


def plan_balance(Ts, tol=NIL_TOL, budget=None):
    """Smallest padding ``p`` with ``n + p = 3d`` and a feasible split.

    For each candidate ``d`` (from ``ceil(n/3)`` upward) and each count ``b``
    of cokernel vectors, ``U1`` may use up to ``a(b)`` kernel vectors
    orthogonal to ``U3 + sum T_i U3``. The split is feasible when
    ``a + b >= n - d``; pads fill the remaining slots of each part.

    Raises
    ------
    KernelEmpty
        If padding is disabled (``budget == 0``) and the joint kernel or
        cokernel is trivial while ``T`` is nonzero.
    BudgetExceeded
        If the minimal padding exceeds ``budget``.
    """
    Ts = _check_family(Ts)
    n = Ts[0].shape[0]
    ker, coker = _joint_kernels(Ts, tol)
    kdim, cdim = ker.shape[1], coker.shape[1]
    if budget == 0 and (kdim == 0 or cdim == 0) and n > 0:
        raise KernelEmpty("operator has trivial kernel or cokernel and padding is disabled")
    a_cache = {}

    def a_of(b):
        if b not in a_cache:
            U3 = coker[:, :b]
            a_cache[b] = (_u1_space(Ts, ker, U3), U3)
        return a_cache[b]

    d = max(1, math.ceil(n / 3))
    while True:
        p = 3 * d - n
        if budget is not None and p > budget:
            raise BudgetExceeded(f"balancing needs padding {p} > budget {budget}")
        for b in range(min(cdim, d), -1, -1):
            space, U3 = a_of(b)
            a = min(space.shape[1], d)
            if a + b >= n - d:
                U1 = space[:, :a]
                p1, p3 = d - a, d - b
                assignment = {"U1": p1, "U2": p - p1 - p3, "U3": p3}
                return BalancePlan(n, d, p, assignment, U1, U3, kdim, cdim)
        d += 1


def pad_for_balance(T, budget=None, tol=NIL_TOL):
    """Pad ``T`` with zeros so a balanced decomposition exists.

    Returns ``(T (+) 0_p, record)`` where ``record`` states ``p`` and how many
    padded coordinates go to each of ``U1``, ``U2`` and ``U3``.
    """
    plan = plan_balance([T], tol, budget)
    return pad_with_zero(T, plan.padding), plan.to_json()


@dataclass
class NilDecomposition:
    """Balanced decomposition of the padded space with the reduced blocks."""

    V: np.ndarray
    dims: tuple
    n_original: int
    plan: BalancePlan
    A: list
    C: list
    D: list
    dropped: list
    B_norms: list

    @property
    def d(self):
        return self.dims[0]

    @property
    def padding(self):
        return self.plan.padding

    def parts(self):
        d = self.d
        return self.V[:, :d], self.V[:, d:2 * d], self.V[:, 2 * d:]

    def padded(self, T):
        return pad_with_zero(as_matrix(T), self.padding)


def joint_nil_decomposition(Ts, tol=NIL_TOL, budget=None):
    """Balanced decomposition shared by a family.

    Raises
    ------
    Infeasible
        Through :class:`KernelEmpty` or :class:`BudgetExceeded`.
    """
    Ts = _check_family(Ts)
    plan = plan_balance(Ts, tol, budget)
    n, d, p = plan.n, plan.d, plan.padding
    N = n + p
    U1r, U3r = plan.U1, plan.U3
    U2r = orth_complement(np.hstack([U1r, U3r]), n)
    pad_ids = list(range(n, N))
    p1, p2 = plan.pad_assignment["U1"], plan.pad_assignment["U2"]

    def lift(U, pads):
        out = np.zeros((N, U.shape[1] + len(pads)), dtype=complex)
        out[:n, :U.shape[1]] = U
        for c, idx in enumerate(pads):
            out[idx, U.shape[1] + c] = 1.0
        return out

    U1 = lift(U1r, pad_ids[:p1])
    U2 = lift(U2r, pad_ids[p1:p1 + p2])
    U3 = lift(U3r, pad_ids[p1 + p2:])
    V = np.hstack([U1, U2, U3])
    A, C, D, dropped, Bn = [], [], [], [], []
    for T in Ts:
        X = V.conj().T @ pad_with_zero(T, p) @ V
        blk = [[X[r * d:(r + 1) * d, c * d:(c + 1) * d] for c in range(3)] for r in range(3)]
        A.append(blk[0][1])
        C.append(blk[1][1])
        D.append(blk[1][2])
        rest = [blk[0][0], blk[1][0], blk[2][0], blk[2][1], blk[2][2], blk[0][2]]
        dropped.append(max(op_norm(b) for b in rest))
        Bn.append(op_norm(blk[0][2]))
    return NilDecomposition(V, (d, d, d), n, plan, A, C, D, dropped, Bn)


def nil_decomposition(T, tol=NIL_TOL, budget=None):
    """Single-operator form of :func:`joint_nil_decomposition`."""
    return joint_nil_decomposition([T], tol, budget)


@dataclass
class NilFactorization:
    """Nilpotent factors in block form and in padded original coordinates.

    ``kind`` is ``"pair"`` (``T = M N``), ``"sandwich"`` (``T_i = N N_i N``)
    or ``"two-sided"`` (``T_i = N1 S_i N2``).
    """

    kind: str
    factors: dict
    block_factors: dict
    nilpotency_indices: dict
    residuals: list
    cube_norms: dict
    decomposition: NilDecomposition
    extra: dict = field(default_factory=dict)

    def max_residual(self):
        return max(self.residuals) if self.residuals else 0.0


def _blocks3(rows):
    return np.block(rows)


def _zero_eye(d):
    return np.zeros((d, d), dtype=complex), np.eye(d, dtype=complex)


def _pull(dec, X):
    return dec.V @ X @ dec.V.conj().T


def _cube_ratio(X):
    return float(np.linalg.norm(X @ X @ X) / (1.0 + op_norm(X)) ** 3)


def _finish(kind, blk, dec, Ts, products):
    factors = {}
    for name, X in blk.items():
        factors[name] = [_pull(dec, Y) for Y in X] if isinstance(X, list) else _pull(dec, X)
    indices, cubes = {}, {}
    for name, X in factors.items():
        mats = X if isinstance(X, list) else [X]
        indices[name] = [nilpotency_index(M, max_index=4) for M in mats]
        cubes[name] = [_cube_ratio(M) for M in mats]
        if not isinstance(X, list):
            indices[name], cubes[name] = indices[name][0], cubes[name][0]
    residuals = []
    for T, P in zip(Ts, products(factors)):
        Tp = dec.padded(T)
        residuals.append(float(np.linalg.norm(P - Tp) / max(np.linalg.norm(Tp), 1e-300))
                         if np.linalg.norm(Tp) > 0 else float(np.linalg.norm(P)))
    return NilFactorization(kind, factors, blk, indices, residuals, cubes, dec)


def factor_two_nilpotents(T, tol=NIL_TOL, budget=None):
    """``T (+) 0_p = M N`` with ``M^3 = N^3 = 0``.

    ``M = [[0,0,A],[I,0,C],[0,0,0]]`` and ``N = [[0,0,D],[0,0,0],[0,I,0]]``
    in the balanced basis. Residuals are relative Frobenius errors.
    """
    T = as_matrix(T)
    dec = nil_decomposition(T, tol, budget)
    Z, I = _zero_eye(dec.d)
    A, C, D = dec.A[0], dec.C[0], dec.D[0]
    M = _blocks3([[Z, Z, A], [I, Z, C], [Z, Z, Z]])
    N = _blocks3([[Z, Z, D], [Z, Z, Z], [Z, I, Z]])
    return _finish("pair", {"M": M, "N": N}, dec, [T],
                   lambda f: [f["M"] @ f["N"]])


def common_nilpotent_sandwich(Ts, tol=NIL_TOL, budget=None):
    """``T_i (+) 0_p = N N_i N`` with one shared ``N``.

    ``N = [[0,I,0],[0,0,I],[0,0,0]]``, ``N_i = [[0,0,0],[A_i,0,0],[C_i,D_i,0]]``.
    """
    Ts = _check_family(Ts)
    dec = joint_nil_decomposition(Ts, tol, budget)
    Z, I = _zero_eye(dec.d)
    N = _blocks3([[Z, I, Z], [Z, Z, I], [Z, Z, Z]])
    Ns = [_blocks3([[Z, Z, Z], [A, Z, Z], [C, D, Z]]) for A, C, D in zip(dec.A, dec.C, dec.D)]
    return _finish("sandwich", {"N": N, "N_i": Ns}, dec, Ts,
                   lambda f: [f["N"] @ X @ f["N"] for X in f["N_i"]])


def common_nilpotent_two_sided(Ts, tol=NIL_TOL, budget=None):
    """``T_i (+) 0_p = N1 S_i N2`` with ``N1 S_i`` and ``S_i N2`` nilpotent.

    ``N1 = [[0,0,I],[I,0,0],[0,0,0]]``, ``N2 = [[0,0,I],[0,0,0],[0,I,0]]``,
    ``S_i = [[D_i,0,C_i],[0,0,0],[0,0,A_i]]``.
    """
    Ts = _check_family(Ts)
    dec = joint_nil_decomposition(Ts, tol, budget)
    Z, I = _zero_eye(dec.d)
    N1 = _blocks3([[Z, Z, I], [I, Z, Z], [Z, Z, Z]])
    N2 = _blocks3([[Z, Z, I], [Z, Z, Z], [Z, I, Z]])
    Ss = [_blocks3([[D, Z, C], [Z, Z, Z], [Z, Z, A]]) for A, C, D in zip(dec.A, dec.C, dec.D)]
    fac = _finish("two-sided", {"N1": N1, "S_i": Ss, "N2": N2}, dec, Ts,
                  lambda f: [f["N1"] @ S @ f["N2"] for S in f["S_i"]])
    left = [fac.factors["N1"] @ S for S in fac.factors["S_i"]]
    right = [S @ fac.factors["N2"] for S in fac.factors["S_i"]]
    fac.extra = {
        "N1S_i_cube": [_cube_ratio(X) for X in left],
        "S_iN2_cube": [_cube_ratio(X) for X in right],
        "N1S_i_index": [nilpotency_index(X, max_index=4) for X in left],
        "S_iN2_index": [nilpotency_index(X, max_index=4) for X in right],
    }
    return fac


@dataclass
class NecessityReport:
    """Kernel bookkeeping for a single matrix at a given tolerance.

    This is a heuristic about the truncation, not a statement about any
    infinite-dimensional operator it may approximate.
    """

    n: int
    kernel_dim: int
    cokernel_dim: int
    feasible_without_padding: bool
    required_padding: int
    note: str = "truncation heuristic"

    def to_json(self):
        return dict(self.__dict__)


def check_nilpotent_product_necessity(T, tol=NIL_TOL):
    T = as_matrix(T)
    ker, coker = _joint_kernels([T], tol)
    plan = plan_balance([T], tol, None)
    return NecessityReport(T.shape[0], ker.shape[1], coker.shape[1],
                           plan.padding == 0, plan.padding)


__all__ = [
    "BalancePlan", "Infeasible", "NecessityReport", "NilDecomposition", "NilFactorization",
    "check_nilpotent_product_necessity", "common_nilpotent_sandwich",
    "common_nilpotent_two_sided", "factor_two_nilpotents", "joint_nil_decomposition",
    "nil_decomposition", "pad_for_balance", "plan_balance",
]
