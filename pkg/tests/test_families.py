import numpy as np
import pytest

from opfactor.families import DescriptorError, FamilyDescriptor, canonical_synthetic, generate

from oracles import singular_values


@pytest.mark.parametrize("doc", [
    {"kind": "nope", "n": 4},
    {"kind": "volterra"},
    {"kind": "volterra", "n": 0},
    {"kind": "diagonal", "n": 4, "decay": 1.5},
    {"kind": "random-compact", "n": 4, "decay": 0.5},
    {"kind": "random-singular", "n": 4, "seed": 1, "kernel_dim": 9},
    {"kind": "canonical-form-synthetic", "seed": 1},
    {"kind": "random-compact", "n": 4, "seed": 1, "count": 0},
    ["volterra"],
])
def test_invalid_descriptors(doc):
    with pytest.raises(DescriptorError):
        FamilyDescriptor.from_json(doc)


def test_volterra_injective():
    (V,) = generate({"kind": "volterra", "n": 8})
    assert np.allclose(V, np.tril(np.ones((8, 8))) / 8)
    assert singular_values(V)[-1] > 0


def test_weighted_shift_superdiagonal():
    (S,) = generate({"kind": "weighted-shift", "n": 16, "decay": 0.5})
    assert np.allclose(np.diag(S, 1), 0.5 ** np.arange(1, 16))
    assert np.count_nonzero(S) == 15


def test_random_compact_spectrum():
    (K,) = generate({"kind": "random-compact", "n": 20, "decay": 0.5, "seed": 7})
    s = np.linalg.svd(K, compute_uv=False)
    assert np.allclose(s, 0.5 ** np.arange(1, 21), rtol=0, atol=1e-12)


def test_seed_determinism():
    d = {"kind": "random-singular", "n": 10, "kernel_dim": 3, "seed": 5, "count": 2}
    a, b = generate(d), generate(d)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert len(a) == 2
    assert not np.array_equal(a[0], a[1])


def test_canonical_synthetic_matches_generate():
    d = {"kind": "canonical-form-synthetic", "m": 8, "n_ops": 2, "seed": 3}
    jcf, Ts = canonical_synthetic(d)
    assert jcf.dims == (8, 8, 8)
    for T, T2, f in zip(Ts, generate(d), jcf.forms):
        assert np.array_equal(T, T2)
        assert np.allclose(jcf.V @ T @ jcf.V_inv, f.assemble())


def test_round_trip_json():
    d = FamilyDescriptor.from_json({"kind": "diagonal", "n": 5, "decay": 0.25})
    assert FamilyDescriptor.from_json(d.to_json()) == d
