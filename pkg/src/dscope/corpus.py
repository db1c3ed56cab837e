"""Labeled corpus ingestion, category-merge taxonomy, and stratified folds.

The training corpus is a JSONL file with one record per line (required keys
``text``, ``language``, ``category``, ``source``; optional
``original_category``). Categories are merged into a closed taxonomy of 11
labels via :class:`MergeRule` lists, and cross-validation folds are produced
by a seeded, platform-independent stratified splitter.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError

# The 11 trainable discourse categories, in canonical (sorted) order.
CANONICAL_LABELS: tuple[str, ...] = (
    "Donate",
    "News & Press",
    "Prevention",
    "Reporting",
    "Share",
    "Speculation",
    "Symptoms",
    "Transmission",
    "Travel",
    "Treatment",
    "What Is Corona?",
)

# Reserved label applied at inference time when a confidence threshold
# rejects a prediction. Never a training label.
UNCLASSIFIED = "Unclassified"

_REQUIRED_KEYS = ("text", "language", "category", "source")
_KNOWN_KEYS = frozenset(_REQUIRED_KEYS) | {"original_category"}


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


@dataclass(frozen=True)
class LabeledSample:
    """One labeled text. ``original_category`` keeps the pre-merge label."""

    text: str
    language: str
    category: str
    source: str
    original_category: str


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable collection of samples plus load-time warning metadata."""

    samples: tuple[LabeledSample, ...]
    unknown_field_warnings: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def labels(self) -> list[str]:
        return [s.category for s in self.samples]


@dataclass(frozen=True)
class MergeRule:
    """Maps original category names onto a canonical target, or discards them.

    A ``discard`` rule must not carry a target; a ``merge`` rule must target
    one of the 11 canonical labels.
    """

    sources: tuple[str, ...]
    action: str  # "merge" | "discard"
    target: str | None = None

    def __post_init__(self):
        if self.action not in ("merge", "discard"):
            raise ValueError(f"unknown merge-rule action {self.action!r}")
        if self.action == "discard" and self.target is not None:
            raise ValueError("discard rule must not have a target")
        if self.action == "merge":
            if self.target is None:
                raise ValueError("merge rule requires a target")
            if self.target not in CANONICAL_LABELS:
                raise ValueError(f"merge target {self.target!r} is not a canonical label")


# Rules that reduce the two source datasets' raw categories to 11 classes:
# drop the two uninformative small-talk intents, fold the three infection-path
# intents into Transmission, and fold the high-risk-area intent into Travel.
DEFAULT_MERGE_RULES: tuple[MergeRule, ...] = (
    MergeRule(sources=("Hi",), action="discard"),
    MergeRule(sources=("Okay/Thanks",), action="discard"),
    MergeRule(
        sources=(
            "Can_i_get_from_feces_animal_pets",
            "Can_i_get_from_packages_surfaces",
            "How_does_corona_spread",
        ),
        action="merge",
        target="Transmission",
    ),
    MergeRule(sources=("What_if_i_visited_high_risk_area",), action="merge", target="Travel"),
)


def load_labeled_dataset(path: str | Path, format: str = "jsonl") -> LabeledDataset:
    """Parse a labeled corpus file (JSONL is the only v1 format).

    All string fields are NFC-normalized so later merge-rule matching is
    byte-exact regardless of the source encoding's composition form. Record
    order and duplicate (text, category) pairs are preserved. Unknown keys
    are ignored; their occurrence count is reported on the returned dataset.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"corpus file not found: {path}")
    samples: list[LabeledSample] = []
    unknown = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: malformed JSON at line {lineno}: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise DataError(f"{path}: line {lineno} is not a JSON object")
            missing = [k for k in _REQUIRED_KEYS if k not in rec]
            if missing:
                raise DataError(f"{path}: line {lineno} missing field(s) {', '.join(missing)}")
            unknown += sum(1 for k in rec if k not in _KNOWN_KEYS)
            text = _nfc(str(rec["text"]))
            if not text:
                raise DataError(f"{path}: line {lineno} has empty text")
            category = _nfc(str(rec["category"]))
            samples.append(
                LabeledSample(
                    text=text,
                    language=_nfc(str(rec["language"])),
                    category=category,
                    source=_nfc(str(rec["source"])),
                    original_category=_nfc(str(rec.get("original_category", category))),
                )
            )
    return LabeledDataset(samples=tuple(samples), unknown_field_warnings=unknown)


def save_labeled_dataset(dataset: LabeledDataset, path: str | Path) -> None:
    """Write a dataset back out in the same JSONL schema (LF line endings)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for s in dataset:
            fh.write(
                json.dumps(
                    {
                        "text": s.text,
                        "language": s.language,
                        "category": s.category,
                        "source": s.source,
                        "original_category": s.original_category,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_merge_rules(path: str | Path) -> tuple[MergeRule, ...]:
    """Read merge rules from a JSON list of {sources, action, target?}."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"merge-rule file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON list of rules")
    rules = []
    for i, entry in enumerate(raw):
        try:
            rules.append(
                MergeRule(
                    sources=tuple(_nfc(s) for s in entry["sources"]),
                    action=entry["action"],
                    target=_nfc(entry["target"]) if entry.get("target") is not None else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: invalid rule at index {i}: {exc}") from exc
    return tuple(rules)


def apply_merge_rules(dataset: LabeledDataset, rules: Sequence[MergeRule]) -> LabeledDataset:
    """Rewrite categories according to ``rules``.

    Matching is on each sample's ``original_category``. Discard rules drop
    the sample, merge rules rewrite ``category`` to the rule target, and
    samples whose original category is already canonical pass through with
    ``category`` set to it. Anything else is an error listing every
    offending category. Text and language are never modified.
    """
    discard: set[str] = set()
    target_of: dict[str, str] = {}
    seen: set[str] = set()
    for rule in rules:
        for src in rule.sources:
            if src in seen:
                raise ValueError(f"original category {src!r} appears in more than one rule")
            seen.add(src)
            if rule.action == "discard":
                discard.add(src)
            else:
                target_of[src] = rule.target  # type: ignore[assignment]

    kept: list[LabeledSample] = []
    offending: set[str] = set()
    for s in dataset:
        oc = s.original_category
        if oc in discard:
            continue
        if oc in target_of:
            kept.append(replace(s, category=target_of[oc]))
        elif oc in CANONICAL_LABELS:
            kept.append(replace(s, category=oc))
        else:
            offending.add(oc)
    if offending:
        raise DataError(
            "categories match no rule and no canonical label: "
            + ", ".join(sorted(offending))
        )
    return LabeledDataset(samples=tuple(kept), unknown_field_warnings=dataset.unknown_field_warnings)


def label_distribution(dataset: LabeledDataset) -> dict[str, int]:
    """Per-category sample counts; values sum to ``len(dataset)``."""
    return dict(Counter(s.category for s in dataset))


# --- stratified folds -------------------------------------------------------

_MASK64 = (1 << 64) - 1


class _SplitMix64:
    """Tiny 64-bit PRNG; identical output on every platform and Python build."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def _shuffle(indices: list[int], rng: _SplitMix64) -> None:
    # Fisher-Yates; the modulo bias at 64 bits is far below any practical effect.
    for i in range(len(indices) - 1, 0, -1):
        j = rng.next() % (i + 1)
        indices[i], indices[j] = indices[j], indices[i]


@dataclass(frozen=True)
class FoldAssignment:
    """Per-sample fold indices for seeded stratified cross-validation."""

    n_folds: int
    seed: int
    assignment: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.assignment)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def stratified_kfold(
    dataset: LabeledDataset | Sequence[str], n_folds: int, seed: int
) -> FoldAssignment:
    """Assign every sample to one of ``n_folds`` folds, stratified by class.

    Per class the sample indices are shuffled with a seeded splitmix64
    stream and dealt round-robin into folds; the dealing position carries
    over between classes so overall fold sizes also differ by at most one.
    The result is a pure function of (labels, n_folds, seed).
    """
    labels = dataset.labels() if isinstance(dataset, LabeledDataset) else list(dataset)
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    by_class: dict[str, list[int]] = {}
    for idx, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(idx)
    for lab in sorted(by_class):
        if len(by_class[lab]) < n_folds:
            raise DataError(
                f"class {lab!r} has {len(by_class[lab])} samples, fewer than n_folds={n_folds}"
            )
    rng = _SplitMix64(seed)
    assignment = np.empty(len(labels), dtype=np.int64)
    fold_cursor = 0
    for lab in sorted(by_class):
        indices = by_class[lab]
        _shuffle(indices, rng)
        for idx in indices:
            assignment[idx] = fold_cursor
            fold_cursor = (fold_cursor + 1) % n_folds
    return FoldAssignment(n_folds=n_folds, seed=seed, assignment=assignment)
