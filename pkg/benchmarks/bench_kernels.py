"""Compare the compiled tree kernel against the numpy reference.

Grows identical forests through both backends on the same synthetic matrix,
checks the serialized trees match byte for byte, and prints a timing table.

Run from the repository root:

    python benchmarks/bench_kernels.py [--rows 8000] [--features 80]
"""
from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

import pibench.kernels as kernels
from pibench.kernels import pyref


def _load_compiled():
    try:
        return importlib.import_module("pibench.kernels._core")
    except ImportError:
        return None


def make_problem(rows, features, seed=7):
    rng = np.random.default_rng(seed)
    xt = np.ascontiguousarray(rng.normal(size=(features, rows)))
    # a few low-cardinality columns, like one-hot blocks after encoding
    for j in range(0, features, 5):
        xt[j] = rng.integers(0, 2, size=rows).astype(float)
    y = (xt[1] + 0.5 * xt[2] * xt[3] + rng.normal(scale=0.3, size=rows) > 0)
    return xt, y.astype(np.float64)


def grow_many(backend, xt, y, n_trees, max_depth, seed=0):
    features, rows = xt.shape
    p_full = np.argsort(xt, axis=1, kind="stable").astype(np.int32)
    h = np.ones(rows)
    rng = np.random.default_rng(seed)
    trees = []
    start = time.perf_counter()
    for i in range(n_trees):
        counts = np.bincount(rng.integers(0, rows, rows),
                             minlength=rows).astype(np.int32)
        p = backend.expand_presort(p_full, counts)
        trees.append(backend.grow_tree(xt, p, y, h, max_depth, 5,
                                       max(1, int(round(features ** 0.5))),
                                       17 + i))
    elapsed = time.perf_counter() - start
    return trees, elapsed


def tree_fingerprint(tree) -> tuple:
    return tuple(repr(np.asarray(tree[k]).tolist())
                 for k in ("feature", "threshold", "value", "count"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=8000)
    ap.add_argument("--features", type=int, default=80)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--depth", type=int, default=8)
    args = ap.parse_args()

    compiled = _load_compiled()
    xt, y = make_problem(args.rows, args.features)
    print(f"matrix: {args.rows} rows x {args.features} features, "
          f"{args.trees} trees, depth {args.depth}")
    print(f"active backend at import time: {kernels.BACKEND}")

    ref_trees, ref_time = grow_many(pyref, xt, y, args.trees, args.depth)
    print(f"{'pure':>9}: {ref_time:8.3f} s  "
          f"({args.trees / ref_time:6.2f} trees/s)")

    if compiled is None:
        print("compiled backend not built; skipping comparison")
        return

    core_trees, core_time = grow_many(compiled, xt, y, args.trees, args.depth)
    print(f"{'compiled':>9}: {core_time:8.3f} s  "
          f"({args.trees / core_time:6.2f} trees/s)   "
          f"speedup x{ref_time / core_time:.1f}")

    mismatches = sum(tree_fingerprint(a) != tree_fingerprint(b)
                     for a, b in zip(ref_trees, core_trees))
    if mismatches:
        raise SystemExit(f"PARITY FAILURE: {mismatches}/{args.trees} trees "
                         f"differ between backends")
    print(f"parity: all {args.trees} trees identical across backends")


if __name__ == "__main__":
    main()
