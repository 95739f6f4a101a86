"""Class-stratified folds of the training set and the generation -> fold schedule.

Folds are the *training* subsets handed to the trainer for one generation;
the trainer keeps its own held-out validation split. Generation ``g`` trains
on fold ``g mod fold_count``, so candidates see different samples as the
search progresses while per-generation cost stays bounded.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Mapping

import numpy as np

from ._validation import check_positive_int
from .errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint, class-balanced folds over the training-sample identifiers.

    For every class, per-fold counts differ by at most one; the folds union
    to exactly the labelled sample set.
    """

    fold_count: int
    folds: tuple[tuple[str, ...], ...]
    class_of: Mapping[str, Hashable]

    def fold_ids(self, index: int) -> tuple[str, ...]:
        return self.folds[index]

    @property
    def sample_count(self) -> int:
        return sum(len(f) for f in self.folds)


def build_partition(
    labels: Mapping[str, Hashable], fold_count: int, seed: int
) -> PartitionPlan:
    """Shuffle each class with a seeded RNG, then deal samples round-robin.

    A single fold cursor continues across classes (classes in sorted order),
    which keeps every class balanced within one sample per fold and evens out
    overall fold sizes. Deterministic for identical (labels, fold_count, seed).
    """
    check_positive_int(fold_count, "fold_count")
    if not labels:
        raise ConfigurationError("labels must contain at least one sample")

    by_class: dict = {}
    for sample_id, cls in labels.items():
        by_class.setdefault(cls, []).append(str(sample_id))

    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(fold_count)]
    cursor = 0
    smallest = min(len(ids) for ids in by_class.values())
    if fold_count > smallest:
        logger.warning(
            "fold_count=%d exceeds the smallest class size (%d); some folds "
            "will miss that class entirely",
            fold_count,
            smallest,
        )
    for cls in sorted(by_class, key=repr):
        ids = sorted(by_class[cls])
        rng.shuffle(ids)
        for sample_id in ids:
            folds[cursor].append(sample_id)
            cursor = (cursor + 1) % fold_count
    return PartitionPlan(
        fold_count=fold_count,
        folds=tuple(tuple(f) for f in folds),
        class_of=dict(labels),
    )


def fold_for_generation(generation: int, fold_count: int) -> int:
    """Fold index evaluated at ``generation``: cycles with period ``fold_count``."""
    check_positive_int(fold_count, "fold_count")
    if generation < 0:
        raise ConfigurationError(f"generation must be >= 0, got {generation}")
    return generation % fold_count


def load_labels_file(path: str | Path) -> dict[str, str]:
    """Read a ``sample_id,class_label`` per-line UTF-8 file into a mapping."""
    labels: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "," not in line:
            raise ConfigurationError(
                f"{path}:{lineno}: expected 'sample_id,class_label', got {line!r}"
            )
        sample_id, cls = line.split(",", 1)
        sample_id = sample_id.strip()
        if sample_id in labels:
            raise ConfigurationError(f"{path}:{lineno}: duplicate sample id {sample_id!r}")
        labels[sample_id] = cls.strip()
    if not labels:
        raise ConfigurationError(f"{path}: no labelled samples found")
    return labels


def class_counts_per_fold(plan: PartitionPlan) -> list[Counter]:
    """Per-fold class histograms; handy for balance checks and reports."""
    return [Counter(plan.class_of[sid] for sid in fold) for fold in plan.folds]
