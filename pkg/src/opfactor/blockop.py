"""Lazily indexed block operators on integer block indices.

A :class:`BlockOperator` is an operator on a direct sum ``(+)_{i in Z} H_i``
of finite-dimensional pieces. Blocks are produced on demand by an accessor;
which blocks may be nonzero is declared up front as a union of
:class:`Region` objects. Regions are sets of the form

    {(i, j) : i in [r0, r1], j in [c0, c1], j - i in [d0, d1]}

with possibly infinite bounds. This family is closed under composition,
which lets :func:`compose` decide symbolically whether every entry of a
product is a finite sum.

Block index 0 is the centre; truncations are always assembled in ascending
block order.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfiniteFiber, NotTriangular, ShapeMismatch
from .linalg import op_norm
from .mmio import read_matrix

INF = math.inf


def _iv(lo=-INF, hi=INF):
    return (float(lo), float(hi))


@dataclass(frozen=True)
class Region:
    rows: tuple = (-INF, INF)
    cols: tuple = (-INF, INF)
    offsets: tuple = (-INF, INF)

    def is_empty(self):
        (r0, r1), (c0, c1), (d0, d1) = self.rows, self.cols, self.offsets
        if r0 > r1 or c0 > c1 or d0 > d1:
            return True
        return c0 - r1 > d1 or c1 - r0 < d0

    def contains(self, i, j):
        return (self.rows[0] <= i <= self.rows[1]
                and self.cols[0] <= j <= self.cols[1]
                and self.offsets[0] <= j - i <= self.offsets[1])

    def intersect(self, other):
        return Region(
            (max(self.rows[0], other.rows[0]), min(self.rows[1], other.rows[1])),
            (max(self.cols[0], other.cols[0]), min(self.cols[1], other.cols[1])),
            (max(self.offsets[0], other.offsets[0]), min(self.offsets[1], other.offsets[1])),
        )

    def to_json(self):
        def enc(iv):
            return [None if math.isinf(v) else int(v) for v in iv]
        return {"rows": enc(self.rows), "cols": enc(self.cols), "offsets": enc(self.offsets)}

    @classmethod
    def from_json(cls, doc):
        def dec(iv, default):
            if iv is None:
                return default
            lo, hi = iv
            return (-INF if lo is None else float(lo), INF if hi is None else float(hi))
        full = (-INF, INF)
        return cls(dec(doc.get("rows"), full), dec(doc.get("cols"), full),
                   dec(doc.get("offsets"), full))


def point(i, j):
    return Region(_iv(i, i), _iv(j, j), _iv(j - i, j - i))


def diagonal(offset=0, rows=(-INF, INF)):
    return Region(_iv(*rows), (-INF, INF), _iv(offset, offset))


def row_ray(i, cols):
    return Region(_iv(i, i), _iv(*cols))


def col_ray(j, rows):
    return Region(_iv(*rows), _iv(j, j))


def _k_range(a, b, i, j):
    """Middle indices ``k`` with ``(i, k)`` in ``a`` and ``(k, j)`` in ``b``."""
    if not (a.rows[0] <= i <= a.rows[1] and b.cols[0] <= j <= b.cols[1]):
        return None
    lo = max(a.cols[0], b.rows[0], i + a.offsets[0], j - b.offsets[1])
    hi = min(a.cols[1], b.rows[1], i + a.offsets[1], j - b.offsets[0])
    if lo > hi:
        return None
    return lo, hi


def compose_regions(a, b):
    """Region of the product of a block pattern ``a`` with a pattern ``b``.

    Returns ``None`` for an empty product. Raises :class:`InfiniteFiber` if
    some entry of the product would sum over infinitely many blocks.
    """
    (c1, d1), (e1, f1) = a.cols, a.offsets
    (a2, b2), (e2, f2) = b.rows, b.offsets
    if a.is_empty() or b.is_empty() or c1 > b2 or a2 > d1:
        return None
    out = Region(
        (max(a.rows[0], c1 - f1, a2 - f1), min(a.rows[1], d1 - e1, b2 - e1)),
        (max(b.cols[0], c1 + e2, a2 + e2), min(b.cols[1], d1 + f2, b2 + f2)),
        (e1 + e2, f1 + f2),
    )
    if out.is_empty():
        return None
    unbounded_below = c1 == -INF and a2 == -INF and e1 == -INF and f2 == INF
    unbounded_above = d1 == INF and b2 == INF and f1 == INF and e2 == -INF
    if unbounded_below or unbounded_above:
        raise InfiniteFiber(f"product of patterns {a} and {b} has infinite fibers")
    return out


class BlockShape:
    """Dimensions of the pieces ``H_i``.

    Parameters
    ----------
    default : int, optional
        Dimension of every piece not listed in ``dims``.
    dims : dict, optional
        Explicit ``index -> dimension`` overrides.
    """

    def __init__(self, default=None, dims=None):
        self.default = default
        self.dims = {int(k): int(v) for k, v in (dims or {}).items()}
        for k, v in self.dims.items():
            if v <= 0:
                raise ValueError(f"block {k} has non-positive dimension {v}")
        if default is not None and default <= 0:
            raise ValueError("default dimension must be positive")

    def dim(self, i):
        i = int(i)
        if i in self.dims:
            return self.dims[i]
        if self.default is None:
            raise KeyError(f"block index {i} has no declared dimension")
        return self.default

    def offsets(self, indices):
        out = [0]
        for i in indices:
            out.append(out[-1] + self.dim(i))
        return out

    def __eq__(self, other):
        return (isinstance(other, BlockShape) and self.default == other.default
                and self.dims == other.dims)

    def __hash__(self):
        return hash((self.default, tuple(sorted(self.dims.items()))))

    def __repr__(self):
        return f"BlockShape(default={self.default}, dims={self.dims})"


class BlockOperator:
    """Block operator with a declared support pattern.

    ``blocks(i, j)`` returns a dense block or ``None`` (zero). It is only
    called for positions inside ``support``; blocks are cached after the
    first evaluation.
    """

    def __init__(self, row_shape, col_shape, support, blocks, norm_bound=None, name=None):
        self.row_shape = row_shape
        self.col_shape = col_shape
        self.support = tuple(r for r in support if not r.is_empty())
        self._blocks = blocks
        self.norm_bound = norm_bound
        self.name = name
        self._cache = {}

    def in_support(self, i, j):
        return any(r.contains(i, j) for r in self.support)

    def block(self, i, j):
        key = (int(i), int(j))
        if key in self._cache:
            return self._cache[key]
        out = None
        if self.in_support(*key):
            out = self._blocks(*key)
            if out is not None:
                out = np.asarray(out, dtype=complex)
                want = (self.row_shape.dim(key[0]), self.col_shape.dim(key[1]))
                if out.shape != want:
                    raise ShapeMismatch(f"block {key} has shape {out.shape}, expected {want}")
        self._cache[key] = out
        return out

    def dense(self, row_indices, col_indices):
        row_indices, col_indices = list(row_indices), list(col_indices)
        ro = self.row_shape.offsets(row_indices)
        co = self.col_shape.offsets(col_indices)
        M = np.zeros((ro[-1], co[-1]), dtype=complex)
        for a, i in enumerate(row_indices):
            for b, j in enumerate(col_indices):
                blk = self.block(i, j)
                if blk is not None:
                    M[ro[a]:ro[a + 1], co[b]:co[b + 1]] = blk
        return M

    def check_norm_bound(self, window, slack=1e-12):
        """True if every block in the window obeys ``norm_bound``."""
        if self.norm_bound is None:
            return True
        idx = range(-window, window + 1)
        for i in idx:
            for j in idx:
                blk = self.block(i, j)
                if blk is not None and op_norm(blk) > self.norm_bound(i, j) + slack:
                    return False
        return True

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self):
        return f"BlockOperator(name={self.name!r}, regions={len(self.support)})"


def zero_operator(row_shape, col_shape=None):
    return BlockOperator(row_shape, col_shape or row_shape, (), lambda i, j: None, name="zero")


def compose(X, Y):
    """Blockwise product ``X Y``; entry ``(i, j)`` is ``sum_k X(i,k) Y(k,j)``."""
    if X.col_shape != Y.row_shape:
        raise ShapeMismatch(f"cannot compose: {X.col_shape} vs {Y.row_shape}")
    pairs = []
    support = []
    for a in X.support:
        for b in Y.support:
            r = compose_regions(a, b)
            if r is not None:
                pairs.append((a, b))
                support.append(r)

    def blocks(i, j):
        ks = set()
        for a, b in pairs:
            kr = _k_range(a, b, i, j)
            if kr is not None:
                ks.update(range(int(kr[0]), int(kr[1]) + 1))
        acc = None
        for k in sorted(ks):
            xb = X.block(i, k)
            if xb is None:
                continue
            yb = Y.block(k, j)
            if yb is None:
                continue
            term = xb @ yb
            acc = term if acc is None else acc + term
        return acc

    name = f"({X.name}*{Y.name})" if X.name and Y.name else None
    return BlockOperator(X.row_shape, Y.col_shape, support, blocks, name=name)


def truncate(X, window):
    """Dense matrix of the blocks with ``|i|, |j| <= window``."""
    if window < 0:
        raise ValueError("window must be non-negative")
    idx = range(-window, window + 1)
    return X.dense(idx, idx)


def central_slice(shape, window, outer):
    """Slice of the central-window rows inside a truncation of radius ``outer``."""
    offs = shape.offsets(range(-outer, outer + 1))
    start = offs[outer - window]
    stop = offs[outer + window + 1]
    return slice(start, stop)


@dataclass
class PowerNormSequence:
    """``values[n-1]`` is the computed norm of the ``n``-th power."""

    values: tuple
    window: int
    guard: int = 0

    def at(self, n):
        return self.values[n - 1]

    def is_submultiplicative(self, rtol=1e-9, atol=0.0):
        v = self.values
        N = len(v)
        for m in range(1, N + 1):
            for n in range(1, N + 1 - m):
                if v[m + n - 1] > v[m - 1] * v[n - 1] * (1 + rtol) + atol:
                    return False
        return True


def dense_power_norms(M, n_max, rows=slice(None)):
    """Norms of ``M[rows] @ M^(n-1)``, i.e. of row-restricted powers."""
    M = np.asarray(M, dtype=complex)
    vals = []
    # only the selected rows of each power are needed
    P = M[rows]
    for n in range(1, n_max + 1):
        if n > 1:
            P = P @ M
        vals.append(op_norm(P))
    return vals


def power_norms(X, n_max, window, guard=None):
    """Power norms of a block operator, evaluated on a central window.

    The operator is truncated at radius ``window + guard`` (``guard``
    defaults to ``n_max``, enough for nearest-neighbour bands) and the
    rows of each power are restricted to blocks with ``|i| <= window``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if guard is None:
        guard = n_max
    outer = window + guard
    M = truncate(X, outer)
    rows = central_slice(X.row_shape, window, outer)
    vals = dense_power_norms(M, n_max, rows)
    return PowerNormSequence(tuple(vals), window, guard)


def gelfand_estimate(seq):
    """``min_n ||X^n||^(1/n)``, an upper bound for the spectral radius of the truncation."""
    vals = seq.values if isinstance(seq, PowerNormSequence) else tuple(seq)
    if not vals:
        raise ValueError("empty power-norm sequence")
    return float(min(v ** (1.0 / n) if v > 0 else 0.0 for n, v in enumerate(vals, start=1)))


@dataclass
class BoundReport:
    bounds: list
    computed: list
    max_weighted: float
    hypothesis_ok: bool
    passed: bool
    scale: float

    def to_json(self):
        return {"bounds": self.bounds, "computed": self.computed,
                "max_weighted": self.max_weighted, "hypothesis_ok": self.hypothesis_ok,
                "passed": self.passed, "scale": self.scale}


def weighted_shift_matrix(blocks, scale=2.0):
    """Dense ``R`` with block ``(j, j+1) = scale**j * L_j`` for ``j = 1..J``."""
    mats = [np.atleast_2d(np.asarray(b, dtype=complex)) for b in blocks]
    if not mats:
        return np.zeros((1, 1), dtype=complex), 1
    d = mats[0].shape[0]
    for m in mats:
        if m.shape != (d, d):
            raise ShapeMismatch("all shift blocks must be square of one size")
    J = len(mats)
    R = np.zeros(((J + 1) * d, (J + 1) * d), dtype=complex)
    for j, L in enumerate(mats, start=1):
        R[(j - 1) * d:j * d, j * d:(j + 1) * d] = scale**j * L
    return R, d


def weighted_diag_qn_bound(blocks, scale=2.0, n_max=10, rtol=1e-9):
    """Check ``||R^n|| <= max_j ||scale^j L_j|| * scale^-(2+...+n)``.

    ``blocks`` are the ``L_j`` (``j = 1, 2, ...``) as matrices, or plain
    numbers standing for ``1 x 1`` blocks. The estimate is valid when
    ``||L_j|| <= scale**(-2 j)`` for ``j >= 2``; this is reported as
    ``hypothesis_ok``.
    """
    R, _ = weighted_shift_matrix(blocks, scale)
    norms = [op_norm(np.atleast_2d(np.asarray(b, dtype=complex))) for b in blocks]
    weighted = [scale**j * v for j, v in enumerate(norms, start=1)]
    mx = max(weighted, default=0.0)
    hyp = all(v <= scale ** (-2 * j) * (1 + rtol) for j, v in enumerate(norms, start=1) if j >= 2)
    computed = dense_power_norms(R, n_max)
    bounds = [mx * scale ** (-(n * (n + 1) // 2 - 1)) for n in range(1, n_max + 1)]
    passed = all(c <= b * (1 + rtol) for c, b in zip(computed, bounds))
    return BoundReport(bounds, computed, mx, hyp, passed, scale)


@dataclass
class Certificate:
    valid: bool
    kind: str
    window: int
    threshold: float
    estimates: list = field(default_factory=list)
    power_norms: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    # (matrix, central row indices) per corner; kept out of the JSON form
    corners: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"valid": self.valid, "kind": self.kind, "window": self.window,
                "threshold": self.threshold, "estimates": self.estimates,
                "power_norms": self.power_norms, "details": self.details}


def triangular_qn_certificate(X, split, window, n_max=20, threshold=1e-2, guard=None):
    """Quasi-nilpotency certificate for a block-triangular operator.

    ``split = (first, second)`` are two complementary index intervals. The
    operator must map nothing from ``first`` into ``second``; then it is
    quasi-nilpotent as soon as both diagonal corners are, whatever the
    off-diagonal corner. Each corner is certified by its Gelfand estimate on
    the truncation.
    """
    first, second = (_iv(*split[0]), _iv(*split[1]))
    lo_first, lo_second = sorted([first, second])
    if lo_first[1] + 1 != lo_second[0] or lo_first[0] != -INF or lo_second[1] != INF:
        raise ValueError(f"split {split} is not a partition of Z into two intervals")
    forbidden = Region(second, first)
    for r in X.support:
        if not r.intersect(forbidden).is_empty():
            raise NotTriangular(f"support region {r} maps {first} into {second}")
    if guard is None:
        guard = n_max
    outer = window + guard
    estimates, seqs, corners = [], [], []
    for part in (first, second):
        idx = [i for i in range(-outer, outer + 1) if part[0] <= i <= part[1]]
        M = X.dense(idx, idx)
        central = [k for k, i in enumerate(idx) if abs(i) <= window]
        offs = X.row_shape.offsets(idx)
        rows = np.concatenate([np.arange(offs[k], offs[k + 1]) for k in central]) \
            if central else np.zeros(0, dtype=int)
        vals = dense_power_norms(M, n_max, rows) if M.size else [0.0] * n_max
        seqs.append(vals)
        corners.append((M, rows))
        estimates.append(gelfand_estimate(vals))
    valid = all(e < threshold for e in estimates)
    return Certificate(valid, "triangular", window, threshold, estimates, seqs,
                       {"split": [list(first), list(second)], "n_max": n_max, "guard": guard},
                       corners)


# ---------------------------------------------------------------------------
# JSON description files


def _generator_block(gen, i, j, rows, cols):
    kind = gen.get("kind", "identity")
    scale = float(gen.get("scale", 1.0))
    ratio = float(gen.get("ratio", 1.0))
    power_of = gen.get("power_of", "row")
    p = {"row": i, "col": j, "offset": j - i}[power_of]
    c = scale * ratio**p
    if kind in ("identity", "shift", "weighted"):
        if rows != cols:
            raise ShapeMismatch("identity generator needs square blocks")
        return c * np.eye(rows, dtype=complex)
    if kind == "diagonal":
        vals = np.asarray(gen["values"], dtype=complex)
        if len(vals) != rows or rows != cols:
            raise ShapeMismatch("diagonal generator size mismatch")
        return c * np.diag(vals)
    raise ValueError(f"unknown generator kind {kind!r}")


def block_operator_from_json(doc, base_dir=None):
    """Build a :class:`BlockOperator` from a description document.

    Each entry of ``doc["blocks"]`` has either ``"position": [i, j]`` with an
    inline ``"matrix_market"`` payload (or ``"file"``), or a ``"region"``
    with a ``"generator"`` descriptor.
    """
    rs = doc["shape"]
    row_shape = BlockShape(rs.get("default"), rs.get("dims"))
    cs = doc.get("col_shape")
    col_shape = BlockShape(cs.get("default"), cs.get("dims")) if cs else row_shape
    fixed = {}
    gens = []
    support = []
    for entry in doc.get("blocks", []):
        if "position" in entry:
            i, j = (int(v) for v in entry["position"])
            if "matrix_market" in entry:
                fixed[(i, j)] = read_matrix(entry["matrix_market"])
            else:
                path = Path(entry["file"])
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                fixed[(i, j)] = read_matrix(path)
            support.append(point(i, j))
        else:
            region = Region.from_json(entry["region"])
            gens.append((region, entry["generator"]))
            support.append(region)

    def blocks(i, j):
        if (i, j) in fixed:
            return fixed[(i, j)]
        acc = None
        for region, gen in gens:
            if region.contains(i, j):
                blk = _generator_block(gen, i, j, row_shape.dim(i), col_shape.dim(j))
                acc = blk if acc is None else acc + blk
        return acc

    return BlockOperator(row_shape, col_shape, support, blocks, name=doc.get("name"))


def load_block_operator(path):
    path = Path(path)
    return block_operator_from_json(json.loads(path.read_text()), base_dir=path.parent)
