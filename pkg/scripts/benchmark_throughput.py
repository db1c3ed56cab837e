#!/usr/bin/env python3
"""Measure linear-model batch-classification throughput.

Soft target: a logistic-regression model over dim-768 vectors should clear
50,000 rows/second/core. This is a measurement harness, not a test; numbers
vary with BLAS build and hardware.

Usage:
    python scripts/benchmark_throughput.py [--rows 200000] [--dim 768]
"""

import argparse
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dscope.classifiers import ClassifierSpec, fit
from dscope.store import write_store
from dscope.surveillance import batch_classify


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=200_000)
    parser.add_argument("--dim", type=int, default=768)
    parser.add_argument("--classes", type=int, default=11)
    parser.add_argument("--chunk-size", type=int, default=8192)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    X_train = rng.normal(size=(args.classes * 40, args.dim))
    y_train = [f"c{i % args.classes}" for i in range(X_train.shape[0])]
    model = fit(ClassifierSpec(family="logreg", hyperparameters={"c": 10.0}), X_train, y_train)

    with tempfile.TemporaryDirectory() as td:
        store = Path(td) / "bench.bin"
        write_store(rng.normal(size=(args.rows, args.dim)).astype(np.float32), store)
        started = time.perf_counter()
        n = sum(1 for _ in batch_classify(model, store, chunk_size=args.chunk_size))
        elapsed = time.perf_counter() - started
    rate = n / elapsed
    print(f"{n} rows x dim {args.dim} in {elapsed:.2f}s -> {rate:,.0f} rows/s "
          f"({'meets' if rate >= 50_000 else 'below'} the 50k soft target)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
