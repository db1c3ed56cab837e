#!/usr/bin/env python3
"""Desk-scale end-to-end experiment on a synthetic topical corpus.

Builds an 11-category corpus (120 texts per category) and a 10-day tweet
stream with drifting topic mix using the deterministic mock embedder, then
drives the full CLI pipeline: tune (Bayesian optimization over CV accuracy),
train on the full corpus, classify the stream, and aggregate the daily
category distributions. Artifacts land under runs/synthetic/.

Usage:
    python scripts/run_synthetic_pipeline.py [--fast] [--out-dir DIR]

--fast shrinks the corpus and tuning budget for a quick smoke run.
"""

import argparse
import datetime as dt
import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dscope.cli import main as dscope_main
from dscope.corpus import CANONICAL_LABELS


def build_corpus(path: Path, per_topic: int, rng: np.random.Generator) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for t, label in enumerate(CANONICAL_LABELS):
            for _ in range(per_topic):
                words = " ".join(f"w{rng.integers(0, 5000)}" for _ in range(6))
                fh.write(
                    json.dumps(
                        {
                            "text": f"T{t}: {words}",
                            "language": ("en", "fr", "es")[int(rng.integers(0, 3))],
                            "category": label,
                            "source": "synthetic",
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


def build_stream(path: Path, days: int, per_day: int, rng: np.random.Generator) -> None:
    """Tweet stream whose topic mix drifts day by day."""
    start = dt.date(2020, 1, 26)
    n_topics = len(CANONICAL_LABELS)
    row = 0
    with path.open("w", encoding="utf-8") as fh:
        for d in range(days):
            # Early days skew to the last topics, later days to the first.
            weights = np.linspace(1.0 + d / days, 2.0 - d / days, n_topics)
            weights /= weights.sum()
            topics = rng.choice(n_topics, size=per_day, p=weights)
            for t in topics:
                words = " ".join(f"w{rng.integers(0, 5000)}" for _ in range(6))
                fh.write(
                    json.dumps(
                        {
                            "record_id": f"tw{row}",
                            "date": (start + dt.timedelta(days=d)).isoformat(),
                            "text": f"T{t}: {words}",
                        }
                    )
                    + "\n"
                )
                row += 1


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fast", action="store_true", help="small corpus, 8 tuning iterations")
    parser.add_argument("--out-dir", default="runs/synthetic")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_topic = 20 if args.fast else 120
    iterations = 8 if args.fast else 30
    folds = 3 if args.fast else 10
    dim = 64 if args.fast else 768

    rng = np.random.default_rng(args.seed)
    corpus = out / "corpus.jsonl"
    stream = out / "tweets.jsonl"
    build_corpus(corpus, per_topic, rng)
    build_stream(stream, days=10, per_day=max(per_topic // 2, 12), rng=rng)

    started = time.time()
    steps = [
        ["--seed", str(args.seed), "mock-embed", "--input", str(corpus),
         "--output", str(out / "train.bin"), "--dim", str(dim)],
        ["--seed", str(args.seed), "mock-embed", "--input", str(stream),
         "--output", str(out / "tweets.bin"), "--dim", str(dim)],
        ["--seed", str(args.seed), "pipeline",
         "--corpus", str(corpus),
         "--train-store", str(out / "train.bin"),
         "--tweet-store", str(out / "tweets.bin"),
         "--family", "svm",
         "--iterations", str(iterations),
         "--folds", str(folds),
         "--output-dir", str(out)],
    ]
    for argv in steps:
        code = dscope_main(argv)
        if code != 0:
            print(f"step failed with exit code {code}: {' '.join(argv)}", file=sys.stderr)
            return code
    print(f"done in {time.time() - started:.0f}s; report at {out / 'report.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
