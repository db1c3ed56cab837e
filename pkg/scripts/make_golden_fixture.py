#!/usr/bin/env python3
"""Regenerate the golden pipeline fixture under tests/data/golden/.

The tweet stream is built from explicit per-day topic counts, so the
expected daily proportions are readable off the construction: day d holds
2+(d%5) Donate texts, 4 Share texts, and 6-(d%5) Travel texts (12/day).
With near-noiseless mock embeddings the tuned classifier recovers the
topic of every tweet, so the aggregated report must reproduce exactly
those fractions; that is the audit behind the frozen report.csv.
"""

import datetime as dt
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "tests" / "data" / "golden"

CATEGORIES = ("Donate", "Share", "Travel")
WORDS = [f"word{i}" for i in range(40)]


def day_counts(d: int) -> tuple[int, int, int]:
    return (2 + d % 5, 4, 6 - d % 5)


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with (GOLDEN / "corpus.jsonl").open("w", encoding="utf-8") as fh:
        for t, label in enumerate(CATEGORIES):
            for i in range(15):
                text = f"T{t}: {WORDS[(7 * i + t) % 40]} {WORDS[(11 * i + 2 * t) % 40]} {WORDS[(13 * i + 3 * t) % 40]}"
                fh.write(
                    json.dumps(
                        {"text": text, "language": "en", "category": label, "source": "golden"}
                    )
                    + "\n"
                )

    row = 0
    start = dt.date(2020, 3, 1)
    with (GOLDEN / "tweets.jsonl").open("w", encoding="utf-8") as fh:
        for d in range(10):
            date = (start + dt.timedelta(days=d)).isoformat()
            for t, count in enumerate(day_counts(d)):
                for k in range(count):
                    text = f"T{t}: {WORDS[(3 * row + k) % 40]} {WORDS[(5 * row + 2 * k) % 40]}"
                    fh.write(
                        json.dumps({"record_id": f"tw{row}", "date": date, "text": text}) + "\n"
                    )
                    row += 1

    # One audited pipeline run produces the frozen report.
    with tempfile.TemporaryDirectory() as td:
        tmp = Path(td)
        base = [sys.executable, "-m", "dscope.cli", "--seed", "42"]
        subprocess.run(
            base + ["mock-embed", "--input", str(GOLDEN / "corpus.jsonl"),
                    "--output", str(tmp / "train.bin"), "--dim", "32", "--noise", "0.1"],
            check=True, cwd=ROOT,
        )
        subprocess.run(
            base + ["mock-embed", "--input", str(GOLDEN / "tweets.jsonl"),
                    "--output", str(tmp / "tweets.bin"), "--dim", "32", "--noise", "0.1"],
            check=True, cwd=ROOT,
        )
        subprocess.run(
            base + ["pipeline", "--corpus", str(GOLDEN / "corpus.jsonl"),
                    "--train-store", str(tmp / "train.bin"),
                    "--tweet-store", str(tmp / "tweets.bin"),
                    "--family", "svm", "--iterations", "6", "--initial", "5",
                    "--folds", "3", "--output-dir", str(tmp / "out")],
            check=True, cwd=ROOT,
        )
        report = tmp / "out" / "report.csv"

        # Audit: every day's proportions must match the construction above.
        lines = report.read_text().splitlines()
        header = lines[0].split(",")
        for d, line in enumerate(lines[1:]):
            cells = line.split(",")
            counts = day_counts(d)
            for label, want in zip(CATEGORIES, counts):
                got = float(cells[header.index(label)])
                if abs(got - want / 12.0) > 1e-6:
                    raise SystemExit(
                        f"audit failed: day {d} {label}: report {got} vs constructed {want / 12.0}"
                    )
            if int(cells[header.index("support")]) != 12:
                raise SystemExit(f"audit failed: day {d} support != 12")
        shutil.copy(report, GOLDEN / "report.csv")
    print(f"golden fixture regenerated and audited under {GOLDEN}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
