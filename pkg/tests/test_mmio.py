import io

import numpy as np
import pytest

from opfactor.errors import MatrixMarketError
from opfactor.mmio import format_matrix, read_matrix, write_matrix

from conftest import crandn


def test_round_trip_is_bit_exact(tmp_path, rng):
    A = crandn(rng, 4, 3) * 1e-7
    p = tmp_path / "a.mtx"
    write_matrix(p, A, comment="seed test")
    B = read_matrix(p)
    assert np.array_equal(A, B)


def test_real_coordinate_symmetric():
    text = """%%MatrixMarket matrix coordinate real symmetric
% comment
3 3 3
1 1 2.0
2 1 -1.5
3 3 4
"""
    A = read_matrix(text)
    assert A.dtype == complex
    assert np.allclose(A, [[2, -1.5, 0], [-1.5, 0, 0], [0, 0, 4]])


def test_hermitian_and_skew():
    herm = "%%MatrixMarket matrix coordinate complex hermitian\n2 2 1\n2 1 1.0 2.0\n"
    A = read_matrix(herm)
    assert A[1, 0] == 1 + 2j and A[0, 1] == 1 - 2j
    skew = "%%MatrixMarket matrix array real skew-symmetric\n2 2\n3.0\n"
    assert np.allclose(read_matrix(skew), [[0, -3], [3, 0]])


def test_array_column_major():
    text = "%%MatrixMarket matrix array integer general\n2 2\n1\n2\n3\n4\n"
    assert np.allclose(read_matrix(io.StringIO(text)), [[1, 3], [2, 4]])


@pytest.mark.parametrize("text", [
    "",
    "%%MatrixMarket vector array real general\n1 1\n1\n",
    "%%MatrixMarket matrix array real general\n2 2\n1\n2\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
    "%%MatrixMarket matrix array real general\n1 1\nnan\n",
    "%%MatrixMarket matrix array complex general\n1 1\n1.0\n",
])
def test_malformed_inputs(text):
    with pytest.raises(MatrixMarketError):
        read_matrix(text)


def test_format_header():
    assert format_matrix(np.eye(1)).startswith("%%MatrixMarket matrix array complex general")


def test_sparse_round_trip_uses_coordinates(rng):
    A = np.zeros((7, 5), dtype=complex)
    A[1, 2] = 1 / 3 + 2j / 7
    A[6, 0] = -1e-300
    text = format_matrix(A)
    assert text.startswith("%%MatrixMarket matrix coordinate complex general")
    assert np.array_equal(read_matrix(text), A)


@pytest.mark.parametrize("sparse", [False, True])
def test_scipy_reads_our_files(tmp_path, rng, sparse):
    sio = pytest.importorskip("scipy.io")
    A = crandn(rng, 6, 4)
    if sparse:
        A[A.real < 0.5] = 0
    p = tmp_path / "a.mtx"
    write_matrix(p, A)
    B = sio.mmread(str(p))
    B = B.toarray() if hasattr(B, "toarray") else B
    assert np.array_equal(np.asarray(B, dtype=complex), A)
