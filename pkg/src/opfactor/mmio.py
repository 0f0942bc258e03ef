"""Matrix Market reading and writing.

Only dense 2-D matrices are produced. Real and integer fields are promoted
to complex. Values are written with ``repr`` so that a write/read cycle is
bit-exact.
"""

import io
from pathlib import Path

import numpy as np

from .errors import MatrixMarketError

_FIELDS = {"real", "complex", "integer", "pattern"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric", "hermitian"}


def _lines(source):
    if isinstance(source, Path):
        return source.read_text().splitlines()
    if isinstance(source, str) and source.strip() and "\n" not in source \
            and not source.lstrip().startswith("%%"):
        return Path(source).read_text().splitlines()
    if isinstance(source, io.IOBase):
        return source.read().splitlines()
    return str(source).splitlines()


def read_matrix(source):
    """Parse a Matrix Market file (path, file object or text) into a complex array."""
    lines = _lines(source)
    if not lines:
        raise MatrixMarketError("empty input")
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise MatrixMarketError(f"bad header: {lines[0]!r}")
    fmt, field, sym = (h.lower() for h in header[2:])
    if fmt not in ("array", "coordinate"):
        raise MatrixMarketError(f"unsupported format {fmt!r}")
    if field not in _FIELDS or sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported field/symmetry {field!r}/{sym!r}")
    if fmt == "array" and field == "pattern":
        raise MatrixMarketError("pattern field requires coordinate format")

    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError("missing size line")
    try:
        size = [int(t) for t in body[0].split()]
        rows = [ln.split() for ln in body[1:]]
        if fmt == "array":
            m, n = size
            A = _array_from_values(_values(body[1:], field, m * n if sym == "general" else None),
                                   m, n, sym)
        else:
            m, n, nnz = size
            rows = body[1:]
            if len(rows) != nnz:
                raise MatrixMarketError(f"expected {nnz} entries, found {len(rows)}")
            A = np.zeros((m, n), dtype=complex)
            if nnz:
                width = {"pattern": 2, "complex": 4}.get(field, 3)
                tok = _table(rows, width)
                i, j = tok[:, 0].astype(int) - 1, tok[:, 1].astype(int) - 1
                if field == "pattern":
                    v = np.ones(nnz, dtype=complex)
                elif field == "complex":
                    v = tok[:, 2] + 1j * tok[:, 3]
                else:
                    v = tok[:, 2].astype(complex)
                np.add.at(A, (i, j), v)
                off = i != j
                if sym == "symmetric":
                    np.add.at(A, (j[off], i[off]), v[off])
                elif sym == "skew-symmetric":
                    np.add.at(A, (j[off], i[off]), -v[off])
                elif sym == "hermitian":
                    np.add.at(A, (j[off], i[off]), np.conj(v[off]))
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MatrixMarketError):
            raise
        raise MatrixMarketError(f"malformed body: {exc}") from exc
    if not np.all(np.isfinite(A)):
        raise MatrixMarketError("non-finite entries")
    return A


def _table(rows, width):
    """Parse whitespace-separated lines into a float table with ``width`` columns."""
    flat = " ".join(rows).split()
    if len(flat) != len(rows) * width:
        raise MatrixMarketError(f"expected {width} numbers per line")
    return np.array(flat, dtype=float).reshape(len(rows), width)


def _values(rows, field, expected=None):
    width = 2 if field == "complex" else 1
    tok = _table(rows, width)
    if expected is not None and len(tok) != expected:
        raise MatrixMarketError(f"expected {expected} values, found {len(tok)}")
    return tok[:, 0] + 1j * tok[:, 1] if width == 2 else tok[:, 0].astype(complex)


def _array_from_values(vals, m, n, sym):
    A = np.zeros((m, n), dtype=complex)
    if sym == "general":
        if len(vals) != m * n:
            raise MatrixMarketError(f"expected {m * n} values, found {len(vals)}")
        A[:, :] = vals.reshape((n, m)).T
        return A
    # lower triangle, column major
    it = iter(vals)
    try:
        for j in range(n):
            for i in range(j + 1 if sym == "skew-symmetric" else j, m):
                v = next(it)
                A[i, j] = v
                if i != j:
                    A[j, i] = {"symmetric": v, "skew-symmetric": -v}.get(sym, np.conj(v))
    except StopIteration:
        raise MatrixMarketError("too few values for symmetric array") from None
    return A


def format_matrix(A, comment=None):
    """Return Matrix Market text (complex, general) for ``A``.

    Matrices with at most half their entries nonzero use the coordinate
    format; others the dense array format. Values are written with ``repr``
    so they round-trip exactly.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    m, n = A.shape
    j, i = np.nonzero(A.T)
    sparse = 2 * len(i) <= A.size
    out = [f"%%MatrixMarket matrix {'coordinate' if sparse else 'array'} complex general"]
    if comment:
        out.extend(f"% {c}" for c in comment.splitlines())
    if sparse:
        out.append(f"{m} {n} {len(i)}")
        vals = A[i, j]
        out.extend(f"{r + 1} {c + 1} {float(v.real)!r} {float(v.imag)!r}"
                   for r, c, v in zip(i.tolist(), j.tolist(), vals))
    else:
        out.append(f"{m} {n}")
        out.extend(f"{float(v.real)!r} {float(v.imag)!r}" for v in A.T.ravel())
    return "\n".join(out) + "\n"


def write_matrix(path, A, comment=None):
    Path(path).write_text(format_matrix(A, comment))
