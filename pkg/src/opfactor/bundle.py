"""Self-verifying result bundles.

A bundle is a directory::

    manifest.json        command, parameters, tolerances, windows, hashes
    certificates.json    typed checks, each recomputable from payloads
    payloads/*.mtx       every input and factor as Matrix Market

Each certificate entry names the payloads it reads. Values are produced by
:func:`evaluate` both when writing and when verifying, so a bundle whose
payloads are untouched always re-verifies.
"""

import datetime
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .blockop import dense_power_norms, gelfand_estimate
from .errors import OpFactorError
from .linalg import nilpotency_index, op_norm
from .mmio import format_matrix, read_matrix

SCHEMA_VERSION = 1
MATCH_TOL = 1e-12


class BundleError(OpFactorError):
    """Malformed bundle."""


class VerifyMismatch(OpFactorError):
    """A payload or certificate does not match its recorded value."""


def _sha(data):
    return hashlib.sha256(data).hexdigest()


def clean_json(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    return obj


def _dumps(doc):
    return json.dumps(clean_json(doc), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# certificate evaluation


def _prod(names, P):
    out = P[names[0]]
    for n in names[1:]:
        out = out @ P[n]
    return out


def _blockwise_max(X, b):
    if not b:
        return op_norm(X)
    nb = X.shape[0] // b
    return max((op_norm(X[i * b:(i + 1) * b, j * b:(j + 1) * b])
                for i in range(nb) for j in range(nb)), default=0.0)


def _eval_residual(e, P):
    lhs, rhs = _prod(e["lhs"], P), _prod(e["rhs"], P)
    crop = e.get("crop")
    if crop:
        s = slice(crop[0], crop[0] + crop[1])
        lhs = lhs[s, s]
    diff = lhs - rhs
    norm = e.get("norm", "2")
    if norm == "fro":
        num = float(np.linalg.norm(diff))
    elif norm == "block":
        num = _blockwise_max(diff, e["block"])
    else:
        num = op_norm(diff)
    scale = e.get("scale", "one_plus_2norm")
    if scale == "fro":
        den = float(np.linalg.norm(rhs)) or 1.0
    elif scale == "one_plus_block":
        den = 1.0 + _blockwise_max(rhs, e["block"])
    elif scale == "none":
        den = 1.0
    else:
        den = 1.0 + op_norm(rhs)
    return num / den


def _eval_cube(e, P):
    X = P[e["matrix"]]
    return float(np.linalg.norm(X @ X @ X) / (1.0 + op_norm(X)) ** 3)


def _eval_nil_index(e, P):
    k = nilpotency_index(P[e["matrix"]], max_index=e.get("max_index", 4))
    return -1 if k is None else k


def _eval_power_norms(e, P):
    M = P[e["matrix"]]
    rows = e.get("rows")
    rows = slice(None) if rows is None else np.asarray(rows, dtype=int)
    vals = dense_power_norms(M, e["n_max"], rows) if M.size else [0.0] * e["n_max"]
    return [float(v) for v in vals]


def _eval_blockdiag(e, P):
    X = P[e["matrix"]]
    Y = np.linalg.matrix_power(X, e.get("power", 3))
    D = P[e["diag"]]
    m = e["block"]
    k = X.shape[0] // m
    off, dg = 0.0, 0.0
    for a in range(k):
        for b in range(k):
            blk = Y[a * m:(a + 1) * m, b * m:(b + 1) * m]
            if a == b:
                dg = max(dg, float(np.max(np.abs(blk - D))) if blk.size else 0.0)
            elif blk.size:
                off = max(off, float(np.max(np.abs(blk))))
    return [off, dg]


def _eval_bound(e, P):
    R = P[e["matrix"]]
    d, scale, n_max = e["block"], e["scale"], e["n_max"]
    J = R.shape[0] // d - 1
    weighted = [op_norm(R[(j - 1) * d:j * d, j * d:(j + 1) * d]) for j in range(1, J + 1)]
    mx = max(weighted, default=0.0)
    computed = dense_power_norms(R, n_max)
    bounds = [mx * scale ** (-(n * (n + 1) // 2 - 1)) for n in range(1, n_max + 1)]
    return [float(c) for c in computed] + [float(b) for b in bounds]


_EVAL = {
    "residual": _eval_residual,
    "cube_norm": _eval_cube,
    "nil_index": _eval_nil_index,
    "power_norms": _eval_power_norms,
    "blockdiag_offnorm": _eval_blockdiag,
    "bound_check": _eval_bound,
}


def evaluate(entry, payloads):
    """Recompute the value of a certificate entry from payload matrices."""
    try:
        fn = _EVAL[entry["kind"]]
    except KeyError:
        raise BundleError(f"unknown certificate kind {entry.get('kind')!r}") from None
    return fn(entry, payloads)


def judge(entry, value):
    """Whether a value passes the entry's threshold."""
    kind, thr = entry["kind"], entry.get("threshold")
    if kind == "nil_index":
        return 0 <= value <= thr
    if kind == "power_norms":
        return gelfand_estimate(value) < thr
    if kind == "blockdiag_offnorm":
        return max(value) <= thr
    if kind == "bound_check":
        n = len(value) // 2
        rtol = entry.get("rtol", 1e-9)
        return all(c <= b * (1 + rtol) for c, b in zip(value[:n], value[n:]))
    return value <= thr


def _close(a, b):
    if isinstance(a, list) or isinstance(b, list):
        if not (isinstance(a, list) and isinstance(b, list)) or len(a) != len(b):
            return False
        return all(_close(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    return abs(a - b) <= MATCH_TOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# writing


class BundleWriter:
    """Collects payloads and certificate entries, then writes the directory."""

    def __init__(self, command, params=None, tolerances=None, windows=None):
        self.command = command
        self.params = dict(params or {})
        self.tolerances = dict(tolerances or {})
        self.windows = dict(windows or {})
        self.payloads = {}
        self.inputs = []
        self.entries = []
        self.records = {}

    def add(self, name, M, is_input=False):
        if name in self.payloads:
            raise ValueError(f"duplicate payload {name!r}")
        M = np.asarray(M, dtype=complex)
        # round-trip once so evaluation sees exactly what is stored
        self.payloads[name] = read_matrix(format_matrix(M)) if M.size else M
        if is_input:
            self.inputs.append(name)
        return name

    def check(self, kind, name, threshold, **fields):
        entry = {"id": name, "kind": kind, "threshold": threshold, **fields}
        value = evaluate(entry, self.payloads)
        entry["value"] = value
        entry["passed"] = bool(judge(entry, value))
        self.entries.append(entry)
        return entry

    def record(self, key, value):
        self.records[key] = value

    @property
    def passed(self):
        return all(e["passed"] for e in self.entries)

    def failed(self):
        return [e["id"] for e in self.entries if not e["passed"]]

    def write(self, path, timestamp=None):
        root = Path(path)
        (root / "payloads").mkdir(parents=True, exist_ok=True)
        hashes = {}
        for name, M in self.payloads.items():
            text = format_matrix(M).encode()
            (root / "payloads" / f"{name}.mtx").write_bytes(text)
            hashes[name] = _sha(text)
        cert_text = _dumps({"entries": self.entries, "records": self.records}).encode()
        (root / "certificates.json").write_bytes(cert_text)
        if timestamp is None:
            timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "params": self.params,
            "tolerances": self.tolerances,
            "windows": self.windows,
            "timestamp": timestamp,
            "inputs": {n: hashes[n] for n in self.inputs},
            "payloads": {n: {"file": f"payloads/{n}.mtx", "sha256": h} for n, h in hashes.items()},
            "certificates": {"file": "certificates.json", "sha256": _sha(cert_text)},
            "all_passed": self.passed,
        }
        (root / "manifest.json").write_text(_dumps(manifest))
        return manifest


# ---------------------------------------------------------------------------
# verification


def load_manifest(path):
    try:
        doc = json.loads((Path(path) / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"cannot read manifest: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise BundleError(f"unsupported schema version {doc.get('schema_version')!r}")
    return doc


def verify_bundle(path):
    """Check hashes and recompute every certificate.

    Returns the number of entries checked.

    Raises
    ------
    BundleError
        If the bundle is malformed.
    VerifyMismatch
        On the first payload, hash or value that does not match.
    """
    root = Path(path)
    manifest = load_manifest(root)
    payloads = {}
    for name, info in sorted(manifest["payloads"].items()):
        fp = root / info["file"]
        try:
            data = fp.read_bytes()
        except OSError as exc:
            raise VerifyMismatch(f"payload {name}: missing ({exc})") from exc
        if _sha(data) != info["sha256"]:
            raise VerifyMismatch(f"payload {name}: sha256 mismatch")
        payloads[name] = read_matrix(data.decode())
    cinfo = manifest["certificates"]
    cdata = (root / cinfo["file"]).read_bytes()
    if _sha(cdata) != cinfo["sha256"]:
        raise VerifyMismatch("certificates.json: sha256 mismatch")
    doc = json.loads(cdata)
    for entry in doc["entries"]:
        try:
            value = evaluate(entry, payloads)
        except KeyError as exc:
            raise VerifyMismatch(f"certificate {entry['id']}: unknown payload {exc}") from exc
        if not _close(clean_json(value), entry["value"]):
            raise VerifyMismatch(
                f"certificate {entry['id']}: recomputed {value!r} != stored {entry['value']!r}")
        if bool(judge(entry, value)) != entry["passed"]:
            raise VerifyMismatch(f"certificate {entry['id']}: pass flag disagrees")
    return len(doc["entries"])
