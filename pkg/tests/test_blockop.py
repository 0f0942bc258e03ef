import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opfactor import blockop
from opfactor.blockop import (
    INF, BlockOperator, BlockShape, Region, compose, gelfand_estimate, power_norms,
    triangular_qn_certificate, truncate, weighted_diag_qn_bound,
)
from opfactor.errors import InfiniteFiber, NotTriangular, ShapeMismatch
from opfactor.families import synthetic_refined_form
from opfactor.qn import q_factors

import oracles
from conftest import crandn


def scalar_op(support, fn, name=None):
    return BlockOperator(BlockShape(1), BlockShape(1), support,
                         lambda i, j: np.array([[fn(i, j)]], dtype=complex), name=name)


def identity_op(b=2):
    return BlockOperator(BlockShape(b), BlockShape(b), [blockop.diagonal(0)],
                         lambda i, j: np.eye(b), name="I")


def shift_op(b=2):
    return BlockOperator(BlockShape(b), BlockShape(b), [blockop.diagonal(1)],
                         lambda i, j: np.eye(b), name="S")


def half_shift(ratio=0.5):
    # block (j, j+1) = ratio**j for j >= 1
    return scalar_op([Region((1, INF), (-INF, INF), (1, 1))], lambda i, j: ratio**i, "W")


def test_shift_squared_support():
    S = shift_op()
    S2 = compose(S, S)
    assert all(r.offsets == (2.0, 2.0) for r in S2.support)
    assert np.allclose(S2.block(3, 5), np.eye(2))
    assert S2.block(3, 4) is None


def test_zero_composition():
    Z = blockop.zero_operator(BlockShape(2))
    P = compose(Z, shift_op())
    assert np.count_nonzero(truncate(P, 3)) == 0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        compose(identity_op(2), identity_op(3))
    bad = BlockOperator(BlockShape(2), BlockShape(2), [blockop.point(0, 0)], lambda i, j: np.eye(3))
    with pytest.raises(ShapeMismatch):
        bad.block(0, 0)


def test_infinite_fiber():
    row = scalar_op([blockop.row_ray(0, (-INF, INF))], lambda i, j: 1.0)
    col = scalar_op([blockop.col_ray(0, (-INF, INF))], lambda i, j: 1.0)
    with pytest.raises(InfiniteFiber):
        compose(row, col)


def test_truncate_examples():
    assert np.array_equal(truncate(identity_op(2), 1), np.eye(6))
    Z = blockop.zero_operator(BlockShape(3))
    assert not truncate(Z, 2).any()


def test_q1_row_scaled_identities(rng):
    rf = synthetic_refined_form(2, 3, rng)
    Q1, Q2 = q_factors(rf)
    M = truncate(Q1, 3)
    b = 2
    center = slice(3 * b, 4 * b)
    for k in range(1, 4):
        col = slice((3 - k) * b, (4 - k) * b)
        assert np.allclose(M[center, col], 2.0 ** -(k - 1) * np.eye(b))
    # (Q1 Q2)(0, 0) is C: the telescoping row/column pair contributes nothing there
    assert np.allclose(compose(Q1, Q2).block(0, 0), rf.C)


def test_power_norm_examples():
    J = np.diag(np.ones(2), 1)
    X = BlockOperator(BlockShape(3), BlockShape(3), [blockop.point(0, 0)], lambda i, j: J)
    seq = power_norms(X, 5, 0)
    assert np.allclose(seq.values, [1, 1, 0, 0, 0])
    assert gelfand_estimate(seq) == 0.0
    seq = power_norms(identity_op(1), 6, 2)
    assert np.allclose(seq.values, 1.0)
    assert gelfand_estimate(seq) == pytest.approx(1.0)


def test_weighted_shift_power_norms():
    seq = power_norms(half_shift(), 20, 2)
    for n in range(1, 21):
        assert seq.at(n) ** (1 / n) == pytest.approx(2.0 ** (-(n + 1) / 2), rel=1e-9)
        assert seq.at(n) == pytest.approx(oracles.shift_power_norm(0.5 ** np.arange(1, 60), n))
    assert gelfand_estimate(seq) <= 2.0**-10.5 + 1e-9
    assert seq.is_submultiplicative()


def test_weighted_diag_bound_examples():
    rep = weighted_diag_qn_bound([0.0, 0.0, 0.0])
    assert rep.passed and all(b == 0 for b in rep.bounds)
    rep = weighted_diag_qn_bound([4.0**-j for j in range(1, 8)], n_max=6)
    assert rep.hypothesis_ok and rep.passed
    assert rep.max_weighted == pytest.approx(0.5)
    for n, b in enumerate(rep.bounds, start=1):
        assert b == pytest.approx(0.5 * 2.0 ** -(n * (n + 1) // 2 - 1))
    rep = weighted_diag_qn_bound([0.3], n_max=4)
    assert rep.computed[1:] == [0.0, 0.0, 0.0]


def test_triangular_certificate_examples(rng):
    b = 2
    upper = BlockOperator(BlockShape(b), BlockShape(b), [blockop.point(-1, 0)],
                          lambda i, j: crandn(rng, b, b))
    cert = triangular_qn_certificate(upper, ((-INF, -1), (0, INF)), 2, n_max=5)
    assert cert.valid and cert.estimates == [0.0, 0.0]
    # decaying shift corners with an arbitrary coupling block
    corner = half_shift()
    cert = triangular_qn_certificate(corner, ((-INF, 0), (1, INF)), 3, n_max=20)
    assert cert.valid
    cert = triangular_qn_certificate(identity_op(1), ((-INF, 0), (1, INF)), 2, n_max=5)
    assert not cert.valid
    lower = scalar_op([blockop.point(1, -1)], lambda i, j: 1.0)
    with pytest.raises(NotTriangular):
        triangular_qn_certificate(lower, ((-INF, 0), (1, INF)), 2)
    with pytest.raises(ValueError):
        triangular_qn_certificate(upper, ((-INF, 0), (2, INF)), 2)


def random_banded(rng, b, offsets, R=3):
    cache = {}

    def fn(i, j):
        if (i, j) not in cache:
            cache[(i, j)] = crandn(rng, b, b)
        return cache[(i, j)]
    regions = [Region((-R, R), (-INF, INF), (o, o)) for o in offsets]
    return BlockOperator(BlockShape(b), BlockShape(b), regions, fn)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_compose_associative(seed):
    r = np.random.default_rng(seed)
    X, Y, Z = (random_banded(r, 2, [-1, 0, 1]) for _ in range(3))
    A = compose(compose(X, Y), Z)
    B = compose(X, compose(Y, Z))
    for i in range(-3, 4):
        for j in range(-3, 4):
            a, c = A.block(i, j), B.block(i, j)
            a = np.zeros((2, 2)) if a is None else a
            c = np.zeros((2, 2)) if c is None else c
            assert np.linalg.norm(a - c) <= 1e-12 * (1 + np.linalg.norm(a))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_truncation_of_product(seed):
    r = np.random.default_rng(seed)
    X, Y = random_banded(r, 2, [-1, 0, 1], R=6), random_banded(r, 2, [0, 1], R=6)
    w, s = 2, 1
    P = truncate(compose(X, Y), w)
    D = truncate(X, w + s) @ truncate(Y, w + s)
    c = slice(2 * s, 2 * (2 * w + 1 + s))
    scale = 1 + np.linalg.norm(truncate(X, w + s), 2) * np.linalg.norm(truncate(Y, w + s), 2)
    assert np.max(np.abs(P - D[c, c])) <= 1e-10 * scale


def test_compose_matches_loop_oracle(rng):
    X, Y = random_banded(rng, 3, [0, 1]), random_banded(rng, 3, [-1, 0])
    idx = range(-5, 6)
    bx = {(i, j): X.block(i, j) for i in idx for j in idx if X.block(i, j) is not None}
    by = {(i, j): Y.block(i, j) for i in idx for j in idx if Y.block(i, j) is not None}
    ref = oracles.dense_block_product(bx, by, idx, 3)
    P = compose(X, Y)
    for i in range(-3, 4):
        for j in range(-3, 4):
            got = P.block(i, j)
            got = np.zeros((3, 3)) if got is None else got
            assert np.allclose(got, ref[(i, j)], atol=1e-12)


def test_strictly_triangular_reaches_zero(rng):
    # 5 occupied block rows: every path has at most 5 steps
    X = random_banded(rng, 2, [1, 2], R=2)
    seq = power_norms(X, 8, 2)
    assert seq.at(5) > 0 and seq.at(6) == 0.0


def test_json_loader(tmp_path):
    doc = {
        "shape": {"default": 2},
        "blocks": [
            {"region": {"rows": [1, None], "offsets": [1, 1]},
             "generator": {"kind": "weighted", "ratio": 0.5}},
            {"position": [0, 0],
             "matrix_market": "%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n"},
        ],
    }
    X = blockop.block_operator_from_json(doc)
    assert np.allclose(X.block(0, 0), np.eye(2))
    assert np.allclose(X.block(2, 3), 0.25 * np.eye(2))
    assert X.block(-2, -1) is None
    r = Region.from_json(Region((1, INF), (-INF, 3), (0, 0)).to_json())
    assert r == Region((1, INF), (-INF, 3), (0, 0))


def test_norm_bound_check():
    X = BlockOperator(BlockShape(1), BlockShape(1), [blockop.diagonal(0)],
                      lambda i, j: np.array([[2.0]]), norm_bound=lambda i, j: 1.0)
    assert not X.check_norm_bound(1)
