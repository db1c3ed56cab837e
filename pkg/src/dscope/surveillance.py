"""Streaming batch inference and daily category-distribution timelines.

Classification runs chunk-by-chunk over an embedding store so tens of
millions of rows never materialize in memory; predictions join the sidecar
metadata and collapse into per-day normalized category proportions (UTC
dates). A trailing rolling average smooths any per-day series.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .classifiers import TrainedModel, predict_arrays
from .corpus import UNCLASSIFIED
from .errors import DataError
from .store import TweetRecord, read_store_chunks, read_store_header

logger = logging.getLogger(__name__)

_PROGRESS_EVERY = 1_000_000

# Inference always runs on row-aligned blocks of this size regardless of the
# I/O chunk size: BLAS accumulation depends on matrix shape, so feeding the
# model identical blocks is what makes chunked and unchunked runs bit-equal.
_INFERENCE_BLOCK = 4096


@dataclass(frozen=True)
class DailyDistribution:
    """Normalized category proportions for one UTC calendar day.

    ``support`` counts the classified (non-Unclassified) tweets; rows
    rejected by a confidence threshold are tallied in ``unclassified`` and
    excluded from the proportion denominator.
    """

    date: dt.date
    proportions: np.ndarray = field(repr=False)
    support: int = 0
    unclassified: int = 0


@dataclass(frozen=True)
class TimelineSeries:
    categories: tuple[str, ...]
    days: tuple[DailyDistribution, ...]

    def __post_init__(self):
        for prev, cur in zip(self.days, self.days[1:]):
            if cur.date != prev.date + dt.timedelta(days=1):
                raise ValueError(f"dates not contiguous: {prev.date} -> {cur.date}")


def batch_classify(
    model: TrainedModel,
    store_path: str | Path,
    chunk_size: int = 8192,
    threshold: float | None = None,
    n_threads: int = 1,
) -> Iterator[tuple[int, str, float]]:
    """Yield (row, label, confidence) for every store row, in row order.

    With ``threshold`` set, predictions whose confidence falls below it are
    relabeled Unclassified (the default, per the reference workflow, applies
    no threshold). Chunked and unchunked runs yield identical sequences;
    chunks may be classified by a small thread pool, merged back in order.
    """
    header = read_store_header(store_path)  # validates before any output
    if header.count and header.dim != model.dim:
        raise DataError(f"store dim {header.dim} != model dim {model.dim}")

    def blocks() -> Iterator[tuple[int, np.ndarray]]:
        # Regroup I/O chunks into fixed inference blocks aligned to absolute
        # row indices, so results cannot depend on chunk_size.
        pending: list[np.ndarray] = []
        pending_rows = 0
        start = 0
        for _, chunk in read_store_chunks(store_path, chunk_size):
            pending.append(chunk)
            pending_rows += chunk.shape[0]
            while pending_rows >= _INFERENCE_BLOCK:
                stacked = np.concatenate(pending) if len(pending) > 1 else pending[0]
                block, rest = stacked[:_INFERENCE_BLOCK], stacked[_INFERENCE_BLOCK:]
                yield start, np.ascontiguousarray(block)
                start += _INFERENCE_BLOCK
                pending = [rest] if rest.shape[0] else []
                pending_rows = rest.shape[0]
        if pending_rows:
            stacked = np.concatenate(pending) if len(pending) > 1 else pending[0]
            yield start, np.ascontiguousarray(stacked)

    def classify(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        label_idx, _, confidence = predict_arrays(model, block.astype(np.float64))
        return label_idx, confidence

    def results() -> Iterator[tuple[int, str, float]]:
        done = 0
        if n_threads > 1:
            pool = ThreadPoolExecutor(max_workers=n_threads)
            outputs = pool.map(lambda sb: (sb[0], *classify(sb[1])), blocks())
        else:
            outputs = ((start, *classify(block)) for start, block in blocks())
        try:
            for start, label_idx, confidence in outputs:
                for offset in range(len(label_idx)):
                    conf = float(confidence[offset])
                    if threshold is not None and conf < threshold:
                        label = UNCLASSIFIED
                    else:
                        label = model.classes[label_idx[offset]]
                    yield start + offset, label, conf
                done += len(label_idx)
                if done // _PROGRESS_EVERY > (done - len(label_idx)) // _PROGRESS_EVERY:
                    logger.info("classified %d / %d rows", done, header.count)
        finally:
            if n_threads > 1:
                pool.shutdown(wait=False, cancel_futures=True)

    return results()


def aggregate_daily(
    predictions: Iterable[tuple[int, str, float]],
    records: Sequence[TweetRecord] | Mapping[int, TweetRecord],
    categories: Sequence[str],
    date_range: tuple[dt.date, dt.date] | None = None,
) -> TimelineSeries:
    """Collapse a prediction stream into a contiguous daily timeline.

    Every predicted row must have sidecar metadata (error naming the row
    otherwise). With an explicit ``date_range``, predictions dated outside
    it are ignored; otherwise the range spans the observed dates. Days with
    no tweets appear with support 0 and a zero vector.
    """
    categories = tuple(categories)
    cat_index = {c: i for i, c in enumerate(categories)}
    if isinstance(records, Mapping):
        by_row = dict(records)
    else:
        by_row = {rec.row: rec for rec in records}

    counts: dict[dt.date, np.ndarray] = {}
    unclassified: dict[dt.date, int] = {}
    for row, label, _conf in predictions:
        rec = by_row.get(row)
        if rec is None:
            raise DataError(f"prediction row {row} has no sidecar metadata")
        day = rec.date
        if date_range is not None and not date_range[0] <= day <= date_range[1]:
            continue
        if label == UNCLASSIFIED:
            unclassified[day] = unclassified.get(day, 0) + 1
            continue
        if label not in cat_index:
            raise DataError(f"prediction row {row} has unknown label {label!r}")
        if day not in counts:
            counts[day] = np.zeros(len(categories))
        counts[day][cat_index[label]] += 1.0

    observed = set(counts) | set(unclassified)
    if date_range is None:
        if not observed:
            return TimelineSeries(categories=categories, days=())
        start, end = min(observed), max(observed)
    else:
        start, end = date_range
        if start > end:
            raise ValueError(f"empty date range: {start} > {end}")

    days = []
    day = start
    while day <= end:
        vec = counts.get(day)
        support = int(vec.sum()) if vec is not None else 0
        proportions = vec / support if support else np.zeros(len(categories))
        days.append(
            DailyDistribution(
                date=day,
                proportions=proportions,
                support=support,
                unclassified=unclassified.get(day, 0),
            )
        )
        day += dt.timedelta(days=1)
    return TimelineSeries(categories=categories, days=tuple(days))


def rolling_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean; the first window-1 entries average the prefix only."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    arr = np.asarray(values, dtype=np.float64)
    out = np.empty_like(arr)
    csum = np.concatenate(([0.0], np.cumsum(arr)))
    for i in range(len(arr)):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def smooth_series(series: TimelineSeries, window: int) -> np.ndarray:
    """Rolling-averaged proportion matrix (days x categories) for plotting."""
    if not series.days:
        return np.zeros((0, len(series.categories)))
    matrix = np.stack([d.proportions for d in series.days])
    return np.column_stack(
        [rolling_average(matrix[:, j], window) for j in range(matrix.shape[1])]
    )


# --- report emit / load -------------------------------------------------------


def emit_report(series: TimelineSeries, fmt: str, path: str | Path) -> None:
    """Write the timeline as CSV or JSON; proportions carry 6 decimals.

    The CSV header is ``date,<categories...>,support,unclassified``; the
    JSON document mirrors the same data. Both round-trip through
    load_report to an equal series (within the rendered precision).
    """
    path = Path(path)
    if fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", *series.categories, "support", "unclassified"])
            for day in series.days:
                writer.writerow(
                    [
                        day.date.isoformat(),
                        *(f"{p:.6f}" for p in day.proportions),
                        day.support,
                        day.unclassified,
                    ]
                )
    elif fmt == "json":
        doc = {
            "categories": list(series.categories),
            "days": [
                {
                    "date": day.date.isoformat(),
                    "proportions": [round(float(p), 6) for p in day.proportions],
                    "support": day.support,
                    "unclassified": day.unclassified,
                }
                for day in series.days
            ],
        }
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_report(path: str | Path) -> TimelineSeries:
    """Parse a report written by emit_report (format inferred from suffix)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"report file not found: {path}")
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        categories = tuple(doc["categories"])
        days = tuple(
            DailyDistribution(
                date=dt.date.fromisoformat(d["date"]),
                proportions=np.asarray(d["proportions"], dtype=np.float64),
                support=int(d["support"]),
                unclassified=int(d["unclassified"]),
            )
            for d in doc["days"]
        )
        return TimelineSeries(categories=categories, days=days)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise DataError(f"{path}: empty report file") from exc
        if header[:1] != ["date"] or header[-2:] != ["support", "unclassified"]:
            raise DataError(f"{path}: unexpected report header {header!r}")
        categories = tuple(header[1:-2])
        days = []
        for row in reader:
            days.append(
                DailyDistribution(
                    date=dt.date.fromisoformat(row[0]),
                    proportions=np.asarray([float(v) for v in row[1:-2]], dtype=np.float64),
                    support=int(row[-2]),
                    unclassified=int(row[-1]),
                )
            )
    return TimelineSeries(categories=categories, days=tuple(days))
