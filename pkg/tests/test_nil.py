import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opfactor.errors import BudgetExceeded, Infeasible, KernelEmpty
from opfactor.families import random_singular
from opfactor.linalg import random_unitary
from opfactor.nil import (
    check_nilpotent_product_necessity, common_nilpotent_sandwich, common_nilpotent_two_sided,
    factor_two_nilpotents, nil_decomposition, pad_for_balance,
)

from conftest import crandn
from oracles import cube, eigenvalue_moduli, numerical_rank


def shared_kernel_family(rng, n, k, count):
    """Operators that all vanish on the same k-dim subspace and miss the same k-dim range."""
    Uin = random_unitary(n, rng)[:, k:]
    Uout = random_unitary(n, rng)[:, k:]
    return [Uout @ crandn(rng, n - k, n - k) @ Uin.conj().T for _ in range(count)]


def balanced_family(rng, d, count):
    """``V [[0,A,0],[0,C,D],[0,0,0]] V*``: balanced without padding."""
    V = random_unitary(3 * d, rng)
    out = []
    for _ in range(count):
        X = np.zeros((3 * d, 3 * d), dtype=complex)
        X[:d, d:2 * d] = crandn(rng, d, d)
        X[d:2 * d, d:] = crandn(rng, d, 2 * d)
        out.append(V @ X @ V.conj().T)
    return out


def test_zero_dim6():
    dec = nil_decomposition(np.zeros((6, 6)))
    assert dec.dims == (2, 2, 2) and dec.padding == 0
    assert not any(np.any(M) for M in dec.A + dec.C + dec.D)


def test_rank_one_dim3():
    T = np.zeros((3, 3), dtype=complex)
    T[0, 0] = 1.0
    dec = nil_decomposition(T)
    assert dec.dims == (1, 1, 1)
    assert max(dec.B_norms) <= 1e-14 and max(dec.dropped) <= 1e-14
    U1, _, U3 = dec.parts()
    assert np.linalg.norm(T @ U1) <= 1e-12
    assert np.linalg.norm(T.conj().T @ U3) <= 1e-12


def test_invertible_without_padding():
    with pytest.raises(KernelEmpty):
        nil_decomposition(np.eye(4), budget=0)
    assert issubclass(KernelEmpty, Infeasible)


def test_pad_for_balance(rng):
    T = balanced_family(rng, 2, 1)[0]
    _, rec = pad_for_balance(T)
    assert rec["padding"] == 0
    Tp, rec = pad_for_balance(crandn(rng, 4, 4))
    assert Tp.shape == (12, 12) and rec["padding"] == 8
    assert rec["assignment"] == {"U1": 4, "U2": 0, "U3": 4}
    with pytest.raises(BudgetExceeded):
        pad_for_balance(crandn(rng, 4, 4), budget=3)


def test_pad_kernel5_on_12(rng):
    # rank 7 forces equal kernel and cokernel dimensions of 5
    T = random_singular(12, 5, rng)
    rep = check_nilpotent_product_necessity(T)
    assert rep.kernel_dim == rep.cokernel_dim == 5
    Tp, rec = pad_for_balance(T)
    n = 12 + rec["padding"]
    assert n % 3 == 0
    fac = factor_two_nilpotents(T)
    assert fac.max_residual() <= 1e-10


def test_pair_zero():
    fac = factor_two_nilpotents(np.zeros((6, 6)))
    B = fac.block_factors
    assert not B["M"][:2, 4:].any() and not B["M"][2:4, 2:4].any() and not B["N"][:2, 4:].any()
    assert np.linalg.norm(fac.factors["M"] @ fac.factors["N"]) == 0.0


def test_pair_random(rng):
    T = random_singular(15, 3, rng)
    fac = factor_two_nilpotents(T)
    assert fac.max_residual() <= 1e-10
    for name in ("M", "N"):
        X = fac.factors[name]
        assert fac.nilpotency_indices[name] <= 3
        assert np.linalg.norm(cube(X)) <= 1e-12 * (1 + np.linalg.norm(X, 2)) ** 3
        assert eigenvalue_moduli(X).max() <= 1e-4
    # the product keeps a kernel of dimension at least dim U1
    P = fac.factors["M"] @ fac.factors["N"]
    assert P.shape[0] - numerical_rank(P, 1e-9) >= fac.decomposition.d - 0


def test_pair_basis_covariance(rng):
    T = random_singular(12, 4, rng)
    U = random_unitary(12, rng)
    a = factor_two_nilpotents(T)
    b = factor_two_nilpotents(U @ T @ U.conj().T)
    assert abs(a.max_residual() - b.max_residual()) <= 1e-10


def test_sandwich_zero():
    fac = common_nilpotent_sandwich([np.zeros((6, 6))] * 3)
    assert all(not X.any() for X in fac.factors["N_i"])
    N = fac.block_factors["N"]
    assert not (N @ N @ N).any()


def test_sandwich_shared_kernel(rng):
    Ts = shared_kernel_family(rng, 12, 4, 2)
    fac = common_nilpotent_sandwich(Ts)
    assert fac.max_residual() <= 1e-10
    assert fac.nilpotency_indices["N"] <= 3
    assert all(i <= 3 for i in fac.nilpotency_indices["N_i"])


def test_two_sided_zero():
    fac = common_nilpotent_two_sided([np.zeros((6, 6))] * 2)
    assert all(not X.any() for X in fac.factors["S_i"])


def test_two_sided_dims_3x16(rng):
    Ts = balanced_family(rng, 16, 3)
    fac = common_nilpotent_two_sided(Ts)
    assert fac.decomposition.dims == (16, 16, 16)
    assert fac.max_residual() <= 1e-10
    assert max(fac.extra["N1S_i_cube"]) <= 1e-12
    assert max(fac.extra["S_iN2_cube"]) <= 1e-12
    N1, N2 = fac.block_factors["N1"], fac.block_factors["N2"]
    assert not cube(N1).any() and not cube(N2).any()


def test_two_sided_square_pattern(rng):
    # (N1 S)^2 keeps only the D A block in position (2, 3)
    Ts = balanced_family(rng, 3, 1)
    fac = common_nilpotent_two_sided(Ts)
    d = 3
    X = fac.block_factors["N1"] @ fac.block_factors["S_i"][0]
    X2 = X @ X
    mask = np.ones_like(X2, dtype=bool)
    mask[d:2 * d, 2 * d:] = False
    assert np.abs(X2[mask]).max() <= 1e-12
    A, D = fac.decomposition.A[0], fac.decomposition.D[0]
    assert np.allclose(X2[d:2 * d, 2 * d:], D @ A)


def test_necessity_report(rng):
    rep = check_nilpotent_product_necessity(np.zeros((6, 6)))
    assert rep.feasible_without_padding and rep.required_padding == 0
    rep = check_nilpotent_product_necessity(np.eye(5))
    assert not rep.feasible_without_padding and rep.kernel_dim == 0
    rep = check_nilpotent_product_necessity(random_singular(9, 2, rng))
    assert rep.kernel_dim == rep.cokernel_dim == 2
    assert rep.note == "truncation heuristic"


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 20), st.integers(1, 6), st.integers(0, 2**31))
def test_pair_residual_property(n, k, seed):
    k = min(k, n)
    T = random_singular(n, k, np.random.default_rng(seed))
    fac = factor_two_nilpotents(T)
    assert fac.max_residual() <= 1e-10
    assert fac.nilpotency_indices["M"] <= 3 and fac.nilpotency_indices["N"] <= 3
