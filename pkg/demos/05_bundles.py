"""
Writing and checking a result bundle
====================================

Each command writes a directory of Matrix Market payloads and a certificate
file whose values ``opfactor verify`` recomputes from the payloads alone.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from opfactor import cli
from opfactor.families import random_singular
from opfactor.mmio import write_matrix

root = Path(tempfile.mkdtemp())
src = root / "T.mtx"
write_matrix(src, random_singular(12, 3, np.random.default_rng(5)))

code = cli.run(["factor-nilpotent", str(src), "--out", str(root / "bundle")])
print("factor-nilpotent exit code", code)

certs = json.loads((root / "bundle" / "certificates.json").read_text())
for entry in certs["entries"]:
    print(f"{entry['id']:<16} {entry['kind']:<12} passed={entry['passed']}")

print("verify exit code", cli.run(["verify", str(root / "bundle")]))

# flipping one payload byte breaks the recorded hash
p = root / "bundle" / "payloads" / "M.mtx"
data = bytearray(p.read_bytes())
data[-2] ^= 1
p.write_bytes(bytes(data))
print("verify after tampering", cli.run(["verify", str(root / "bundle")]))
