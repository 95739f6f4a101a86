"""Fitness evaluation: one trainer request per seed, aggregated into phi.

phi = 1 - mean(seed validation accuracies); the search minimizes phi, which
is the same as maximizing mean validation accuracy. Seeds are independent
trials and may run concurrently up to the endpoint's declared capacity.
"""

from __future__ import annotations

import logging
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .endpoints import TrainerEndpoint
from .errors import ConfigurationError, ProtocolError
from .genotype import BlockSpec, Genotype, as_genotype, decode
from .protocol import EvaluateRequest

logger = logging.getLogger(__name__)

CROSS_ENTROPY = "categorical-cross-entropy"


@dataclass(frozen=True)
class TrainingBudget:
    """Per-evaluation training limits passed through to the trainer."""

    max_epochs: int = 30
    patience: int = 3
    loss: str = CROSS_ENTROPY

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")
        if self.patience > self.max_epochs:
            raise ConfigurationError(
                f"patience ({self.patience}) must not exceed max_epochs ({self.max_epochs})"
            )


@dataclass(frozen=True)
class FitnessRecord:
    """Result of evaluating one individual across all seeds.

    ``failed_seeds`` flags seeds that exhausted the retry budget and were
    penalized with accuracy 0.0.
    """

    genotype_id: str
    phi: float
    seed_accuracies: tuple[float, ...]
    generation: int
    fold_index: int
    wall_time: float
    epochs_run: tuple[int, ...]
    failed_seeds: tuple[int, ...] = ()

    @property
    def mean_accuracy(self) -> float:
        return 1.0 - self.phi

    def to_dict(self) -> dict:
        return {
            "genotype_id": self.genotype_id,
            "phi": self.phi,
            "seed_accuracies": list(self.seed_accuracies),
            "generation": self.generation,
            "fold_index": self.fold_index,
            "wall_time": self.wall_time,
            "epochs_run": list(self.epochs_run),
            "failed_seeds": list(self.failed_seeds),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FitnessRecord":
        return cls(
            genotype_id=doc["genotype_id"],
            phi=float(doc["phi"]),
            seed_accuracies=tuple(float(a) for a in doc["seed_accuracies"]),
            generation=int(doc["generation"]),
            fold_index=int(doc["fold_index"]),
            wall_time=float(doc["wall_time"]),
            epochs_run=tuple(int(e) for e in doc["epochs_run"]),
            failed_seeds=tuple(int(i) for i in doc.get("failed_seeds", ())),
        )


def aggregate_phi(seed_accuracies: Sequence[float]) -> float:
    """1 - mean accuracy; permutation-invariant in the seed ordering."""
    arr = np.asarray(seed_accuracies, dtype=np.float64)
    if arr.size == 0:
        raise ConfigurationError("need at least one seed accuracy")
    return float(1.0 - arr.mean())


def evaluate(
    genotype: Genotype,
    spec: BlockSpec,
    endpoint: TrainerEndpoint,
    fold_index: int,
    seeds: Sequence[int],
    budget: TrainingBudget,
    *,
    train_sample_ids: Sequence[str] | None = None,
    fold_ref: str | None = None,
    genotype_id: str = "",
    generation: int = -1,
) -> FitnessRecord:
    """Fine-tune once per seed through ``endpoint`` and aggregate into phi.

    Failed, timed-out, or protocol-violating replies are retried up to the
    endpoint's ``retry_budget``; a seed that still fails contributes accuracy
    0.0 (pessimistic penalty) and is flagged in the record. Unrecoverable
    transport errors propagate as :class:`TrainerProcessError`.
    """
    if not seeds:
        raise ConfigurationError("seeds must not be empty")
    genotype = as_genotype(genotype)
    config = decode(genotype, spec)
    if train_sample_ids is None and fold_ref is None:
        fold_ref = f"fold-{fold_index}"

    started = time.perf_counter()

    def run_seed(seed: int) -> tuple[float, int, bool]:
        attempts = 1 + max(0, endpoint.retry_budget)
        failure = "no attempt made"
        for _ in range(attempts):
            request = EvaluateRequest(
                request_id=uuid.uuid4().hex,
                genotype_id=genotype_id,
                block_rates=tuple(float(r) for r in config.rates),
                frozen_mask=tuple(int(m) for m in config.mask),
                fold_index=fold_index,
                seed=int(seed),
                max_epochs=budget.max_epochs,
                patience=budget.patience,
                loss=budget.loss,
                train_sample_ids=(
                    tuple(train_sample_ids) if train_sample_ids is not None else None
                ),
                fold_ref=fold_ref,
            )
            try:
                response = endpoint.evaluate(request, genes=genotype.genes)
            except (ProtocolError, TimeoutError) as exc:
                failure = str(exc)
                continue
            if response.status == "ok":
                return float(response.validation_accuracy), int(response.epochs_run), False
            failure = response.message or "trainer reported failure"
        # Retry budget exhausted: pessimistic penalty instead of aborting the
        # generation (evolutionary search tolerates noisy penalties).
        logger.warning(
            "seed %d of %s penalized with accuracy 0.0 after %d attempts: %s",
            seed,
            genotype_id or "<unnamed>",
            attempts,
            failure,
        )
        return 0.0, 0, True

    if endpoint.capacity > 1 and len(seeds) > 1:
        workers = min(len(seeds), endpoint.capacity)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_seed, seeds))
    else:
        outcomes = [run_seed(s) for s in seeds]

    accuracies = tuple(acc for acc, _, _ in outcomes)
    epochs = tuple(ep for _, ep, _ in outcomes)
    failed = tuple(i for i, (_, _, bad) in enumerate(outcomes) if bad)
    return FitnessRecord(
        genotype_id=genotype_id,
        phi=aggregate_phi(accuracies),
        seed_accuracies=accuracies,
        generation=generation,
        fold_index=fold_index,
        wall_time=time.perf_counter() - started,
        epochs_run=epochs,
        failed_seeds=failed,
    )
