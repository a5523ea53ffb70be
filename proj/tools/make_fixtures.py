#!/usr/bin/env python3
"""Writes TT files with numpy alone, plus their dense expansions, for the
cross-implementation I/O test. Run from the repository root:

    python3 tools/make_fixtures.py tests/data
"""
import json
import sys
from pathlib import Path

import numpy as np


def write(path: Path, kind, rows, cols, ranks, cores):
    blob = path.with_suffix(".bin")
    # each core (r1, n[, m], r2) flattened with the left rank fastest
    data = b"".join(np.asfortranarray(c).astype("<f8").tobytes(order="F") for c in cores)
    blob.write_bytes(data)
    manifest = {"type": kind, "mode_sizes": rows, "ranks": ranks, "dtype": "f64le",
                "core_order": "left_rank_fastest", "blob": blob.name}
    if cols is not None:
        manifest["col_sizes"] = cols
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def dense_vector(cores):
    # contract left to right; index of mode 1 varies fastest in the result
    t = cores[0][0]  # (n1, r1)
    for c in cores[1:]:
        t = np.einsum("ia,ajb->ijb", t, c).reshape(-1, c.shape[2], order="F")
    return t[:, 0]


def dense_matrix(cores):
    t = cores[0][0]  # (n1, m1, r1)
    for c in cores[1:]:
        t = np.einsum("ija,aklb->ikjlb", t, c)
        s = t.shape
        t = t.reshape(s[0] * s[1], s[2] * s[3], s[4], order="F")
    return t[:, :, 0]


def main(out: Path):
    rng = np.random.default_rng(20121004)
    out.mkdir(parents=True, exist_ok=True)

    rows, ranks = [3, 2, 4], [1, 2, 3, 1]
    vc = [rng.standard_normal((ranks[k], rows[k], ranks[k + 1])) for k in range(3)]
    write(out / "numpy_vector.json", "ttvector", rows, None, ranks, vc)

    mrows, mcols, mranks = [2, 3], [3, 2], [1, 2, 1]
    mc = [rng.standard_normal((mranks[k], mrows[k], mcols[k], mranks[k + 1])) for k in range(2)]
    write(out / "numpy_matrix.json", "ttmatrix", mrows, mcols, mranks, mc)

    expect = {"vector": dense_vector(vc).tolist(),
              "matrix": dense_matrix(mc).tolist()}  # row-major nested lists
    (out / "numpy_dense.json").write_text(json.dumps(expect) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data"))
