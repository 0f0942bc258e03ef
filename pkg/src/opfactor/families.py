"""Seeded operator families used as test inputs.

A family is described by a small JSON-compatible dict, for example
``{"kind": "random-compact", "n": 32, "decay": 0.5, "seed": 7}``.
"""

from dataclasses import dataclass, field

import numpy as np

from .decompose import CanonicalForm, JointCanonicalForm, TripleDecomposition
from .linalg import random_unitary
from .qn import RefinedForm

KINDS = ("volterra", "weighted-shift", "diagonal", "random-compact", "random-singular",
         "canonical-form-synthetic")
_RANDOM = {"random-compact", "random-singular", "canonical-form-synthetic"}


class DescriptorError(ValueError):
    """Invalid family descriptor."""


@dataclass
class FamilyDescriptor:
    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict) or "kind" not in doc:
            raise DescriptorError("descriptor must be an object with a 'kind'")
        params = {k: v for k, v in doc.items() if k != "kind"}
        fd = cls(doc["kind"], params)
        fd.validate()
        return fd

    def to_json(self):
        return {"kind": self.kind, **self.params}

    def validate(self):
        if self.kind not in KINDS:
            raise DescriptorError(f"unknown kind {self.kind!r}")
        p = self.params
        size_keys = ("m",) if self.kind == "canonical-form-synthetic" else ("n",)
        for key in size_keys:
            if not isinstance(p.get(key), int) or p[key] <= 0:
                raise DescriptorError(f"{self.kind} needs a positive integer {key!r}")
        if "decay" in p or self.kind in ("weighted-shift", "diagonal", "random-compact"):
            r = p.get("decay", 0.5)
            if not isinstance(r, (int, float)) or not 0 < r < 1:
                raise DescriptorError("decay must lie in (0, 1)")
        if self.kind in _RANDOM and not isinstance(p.get("seed"), int):
            raise DescriptorError(f"{self.kind} needs an integer 'seed'")
        if self.kind == "random-singular":
            k = p.get("kernel_dim", 1)
            if not isinstance(k, int) or not 1 <= k <= p["n"]:
                raise DescriptorError("kernel_dim must be in [1, n]")
        if "count" in p and (not isinstance(p["count"], int) or p["count"] < 1):
            raise DescriptorError("count must be a positive integer")
        return self


def volterra(n):
    """Lower-triangular averaging matrix ``V[i, j] = 1/n`` for ``j <= i``."""
    return np.tril(np.ones((n, n), dtype=complex)) / n


def weighted_shift(n, decay=0.5):
    """Forward shift with weights ``decay**j`` on the superdiagonal (``j = 1..n-1``)."""
    S = np.zeros((n, n), dtype=complex)
    S[np.arange(n - 1), np.arange(1, n)] = decay ** np.arange(1, n)
    return S


def diagonal(n, decay=0.5):
    return np.diag(decay ** np.arange(1, n + 1)).astype(complex)


def random_compact(n, decay, rng):
    """``U diag(decay**j) W*`` with Haar unitaries; singular values ``decay**j``, ``j = 1..n``."""
    U, W = random_unitary(n, rng), random_unitary(n, rng)
    return (U * decay ** np.arange(1, n + 1)) @ W.conj().T


def random_singular(n, kernel_dim, rng):
    r = n - kernel_dim
    X = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    Y = rng.standard_normal((r, n)) + 1j * rng.standard_normal((r, n))
    return X @ Y


def _unit(rng, rows, cols, scale=1.0):
    M = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    nrm = np.linalg.norm(M, 2)
    return M * (scale / nrm) if nrm > 0 else M


def _decaying(rng, m, decay):
    U = random_unitary(m, rng)
    W = random_unitary(m, rng)
    return (U * decay ** np.arange(m)) @ W.conj().T


def synthetic_joint_form(m, n_ops, rng, decay=0.25):
    """Joint canonical form with blocks of size ``m`` and compact ``K_i``, ``L_i``.

    ``A_i, C_i, D_i`` have unit norm; ``K_i`` and ``L_i`` have singular values
    ``decay**j``. Returns ``(JointCanonicalForm, Ts)`` with
    ``T_i = V^-1 X_i V``.
    """
    N = 3 * m
    Vb = random_unitary(N, rng)
    V, V_inv = Vb, Vb.conj().T
    dec = TripleDecomposition(V_inv[:, :m], V_inv[:, m:2 * m], V_inv[:, 2 * m:], {})
    Z = np.zeros((m, m), dtype=complex)
    forms, Ts = [], []
    for _ in range(n_ops):
        A, C, D = (_unit(rng, m, m) for _ in range(3))
        K, L = _decaying(rng, m, decay), _decaying(rng, m, decay)
        cf = CanonicalForm(A, K, C, D, L, Z.copy(), V, V_inv, (m, m, m), N,
                           {"total": 0}, dec, 0.0, {})
        forms.append(cf)
        Ts.append(V_inv @ cf.assemble() @ V)
    return JointCanonicalForm(V, V_inv, (m, m, m), forms), Ts


def synthetic_refined_form(block_dim, pieces, rng, base=4.0):
    """Refined form with ``||K_n||, ||L_n|| = base**-n`` for ``n >= 2`` and unit-norm rest."""
    b = block_dim

    def piece(n):
        return _unit(rng, b, b, 1.0 if n == 1 else base ** -n)

    A = [_unit(rng, b, b) for _ in range(pieces)]
    D = [_unit(rng, b, b) for _ in range(pieces)]
    K = [piece(n) for n in range(1, pieces + 1)]
    L = [piece(n) for n in range(1, pieces + 1)]
    return RefinedForm(A, K, _unit(rng, b, b), D, L, b)


def generate(desc):
    """Matrices of a family as a list (``count`` members for random kinds)."""
    if isinstance(desc, dict):
        desc = FamilyDescriptor.from_json(desc)
    desc.validate()
    p = desc.params
    if desc.kind == "volterra":
        return [volterra(p["n"])]
    if desc.kind == "weighted-shift":
        return [weighted_shift(p["n"], p.get("decay", 0.5))]
    if desc.kind == "diagonal":
        return [diagonal(p["n"], p.get("decay", 0.5))]
    rng = np.random.default_rng(p["seed"])
    count = p.get("count", 1)
    if desc.kind == "random-compact":
        return [random_compact(p["n"], p.get("decay", 0.5), rng) for _ in range(count)]
    if desc.kind == "random-singular":
        return [random_singular(p["n"], p.get("kernel_dim", 1), rng) for _ in range(count)]
    _, Ts = synthetic_joint_form(p["m"], p.get("n_ops", count), rng, p.get("decay", 0.25))
    return Ts


def canonical_synthetic(desc):
    """The joint canonical form behind a ``canonical-form-synthetic`` descriptor."""
    if isinstance(desc, dict):
        desc = FamilyDescriptor.from_json(desc)
    if desc.kind != "canonical-form-synthetic":
        raise DescriptorError("not a canonical-form-synthetic descriptor")
    p = desc.params
    rng = np.random.default_rng(p["seed"])
    return synthetic_joint_form(p["m"], p.get("n_ops", p.get("count", 1)), rng,
                                p.get("decay", 0.25))
