"""Shared fixtures: corpus builders and synthetic topic embeddings."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from dscope.corpus import CANONICAL_LABELS, LabeledDataset, LabeledSample
from dscope.store import mock_embed

# Reference class counts of the merged training corpus (total 4,919).
REFERENCE_CLASS_COUNTS = {
    "Donate": 310,
    "News & Press": 310,
    "Prevention": 431,
    "Reporting": 389,
    "Share": 310,
    "Speculation": 363,
    "Symptoms": 348,
    "Transmission": 1152,
    "Travel": 615,
    "Treatment": 381,
    "What Is Corona?": 310,
}

# Reference language counts (total 4,919).
REFERENCE_LANGUAGE_COUNTS = {"en": 2119, "fr": 1400, "es": 1400}


def make_dataset(labels: list[str], language: str = "en") -> LabeledDataset:
    samples = tuple(
        LabeledSample(
            text=f"text {i}",
            language=language,
            category=lab,
            source="test",
            original_category=lab,
        )
        for i, lab in enumerate(labels)
    )
    return LabeledDataset(samples=samples)


@pytest.fixture(scope="session")
def reference_scale_dataset() -> LabeledDataset:
    """Synthetic corpus with the reference class and language distribution."""
    labels: list[str] = []
    for lab in CANONICAL_LABELS:
        labels.extend([lab] * REFERENCE_CLASS_COUNTS[lab])
    languages: list[str] = []
    for lang, n in REFERENCE_LANGUAGE_COUNTS.items():
        languages.extend([lang] * n)
    samples = tuple(
        LabeledSample(
            text=f"sample {i} about {lab.lower()}",
            language=languages[i],
            category=lab,
            source="synthetic",
            original_category=lab,
        )
        for i, lab in enumerate(labels)
    )
    return LabeledDataset(samples=samples)


def write_jsonl(path: Path, records: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def topic_corpus(
    n_topics: int,
    per_topic: int,
    dim: int,
    seed: int = 42,
    noise: float = 0.3,
    labels: list[str] | None = None,
) -> tuple[np.ndarray, list[str], list[str]]:
    """(embedding matrix, labels, texts) for a separable synthetic corpus."""
    if labels is None:
        labels = [f"topic{t:02d}" for t in range(n_topics)]
    rng = np.random.default_rng(seed)
    X = []
    y = []
    texts = []
    for t in range(n_topics):
        for i in range(per_topic):
            words = " ".join(f"w{rng.integers(0, 5000)}" for _ in range(6))
            text = f"T{t}: {words}"
            X.append(mock_embed(text, dim, seed, noise=noise))
            y.append(labels[t])
            texts.append(text)
    return np.stack(X).astype(np.float64), y, texts
