import sys
from pathlib import Path

import numpy as np
import pytest

from biotune import (
    BlockSpec,
    ConfigurationError,
    ProcessEndpoint,
    TrainingBudget,
    aggregate_phi,
    as_genotype,
    evaluate,
    surrogate_sphere,
)

FAKE_TRAINER = Path(__file__).parent / "helpers" / "fake_trainer.py"


def spec_of(blocks):
    return BlockSpec(block_count=blocks, base_rates=np.full(blocks, 0.001))


class TestAggregatePhi:
    def test_mean_complement(self):
        assert aggregate_phi([0.9, 0.8, 1.0]) == pytest.approx(0.1, abs=1e-12)

    def test_zero_accuracy_is_worst(self):
        assert aggregate_phi([0.0, 0.0, 0.0]) == 1.0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        accs = rng.uniform(0, 1, size=9)
        shuffled = accs.copy()
        rng.shuffle(shuffled)
        assert aggregate_phi(accs) == pytest.approx(aggregate_phi(shuffled), abs=1e-15)

    def test_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            accs = rng.uniform(0, 1, size=rng.integers(1, 8))
            assert 0.0 <= aggregate_phi(accs) <= 1.0


class TestEvaluate:
    def test_sphere_optimum_reaches_oracle_minimum(self):
        optimum = np.array([0.25, 0.5, 0.75, 0.1])
        ep = surrogate_sphere(optimum)
        record = evaluate(
            as_genotype(optimum),
            spec_of(3),
            ep,
            fold_index=0,
            seeds=[1, 2, 3],
            budget=TrainingBudget(),
            train_sample_ids=("a", "b"),
            genotype_id="ind-1",
            generation=0,
        )
        # analytic minimum of the sphere oracle is phi = 0 at its optimum
        assert record.phi == 0.0
        assert record.seed_accuracies == (1.0, 1.0, 1.0)
        assert record.genotype_id == "ind-1"
        assert len(record.epochs_run) == 3

    def test_record_invariant_phi_complements_mean(self):
        ep = surrogate_sphere(np.array([0.3, 0.3, 0.3]))
        record = evaluate(
            as_genotype([0.9, 0.1, 0.4]),
            spec_of(2),
            ep,
            fold_index=1,
            seeds=[1, 2],
            budget=TrainingBudget(),
            train_sample_ids=("a",),
        )
        assert record.phi == pytest.approx(
            1.0 - float(np.mean(record.seed_accuracies)), abs=1e-12
        )
        assert record.fold_index == 1

    def test_reproducible_with_deterministic_endpoint(self):
        ep = surrogate_sphere(np.array([0.3, 0.6, 0.9]))
        args = dict(
            spec=spec_of(2),
            endpoint=ep,
            fold_index=0,
            seeds=[7, 8, 9],
            budget=TrainingBudget(),
            train_sample_ids=("x",),
        )
        g = as_genotype([0.5, 0.25, 0.75])
        a = evaluate(g, **args)
        b = evaluate(g, **args)
        assert a.seed_accuracies == b.seed_accuracies
        assert a.phi == b.phi

    def test_requires_seeds(self):
        ep = surrogate_sphere(np.array([0.5, 0.5, 0.5]))
        with pytest.raises(ConfigurationError):
            evaluate(
                as_genotype([0.5, 0.5, 0.5]),
                spec_of(2),
                ep,
                fold_index=0,
                seeds=[],
                budget=TrainingBudget(),
            )

    def test_flaky_trainer_recovers_within_retry_budget(self):
        ep = ProcessEndpoint(
            [sys.executable, str(FAKE_TRAINER), "--mode", "flaky-failed"],
            timeout=5.0,
            retry_budget=1,
        )
        with ep:
            record = evaluate(
                as_genotype([0.9, 0.2, 0.1]),
                spec_of(2),
                ep,
                fold_index=0,
                seeds=[1, 2],
                budget=TrainingBudget(),
                train_sample_ids=("a",),
            )
        # every odd attempt fails, the retry succeeds: no penalized seeds
        assert record.failed_seeds == ()
        assert all(0.0 <= a <= 1.0 for a in record.seed_accuracies)

    def test_exhausted_retries_penalize_with_zero(self):
        ep = ProcessEndpoint(
            [sys.executable, str(FAKE_TRAINER), "--mode", "silent"],
            timeout=0.3,
            retry_budget=1,
        )
        with ep:
            record = evaluate(
                as_genotype([0.9, 0.2, 0.1]),
                spec_of(2),
                ep,
                fold_index=0,
                seeds=[1, 2],
                budget=TrainingBudget(),
                train_sample_ids=("a",),
            )
        assert record.failed_seeds == (0, 1)
        assert record.seed_accuracies == (0.0, 0.0)
        assert record.phi == 1.0

    def test_protocol_violation_penalized_after_retries(self):
        ep = ProcessEndpoint(
            [sys.executable, str(FAKE_TRAINER), "--mode", "bad-accuracy"],
            timeout=5.0,
            retry_budget=1,
        )
        with ep:
            record = evaluate(
                as_genotype([0.9, 0.2, 0.1]),
                spec_of(2),
                ep,
                fold_index=0,
                seeds=[4],
                budget=TrainingBudget(),
                train_sample_ids=("a",),
            )
        assert record.failed_seeds == (0,)


class TestTrainingBudget:
    def test_defaults(self):
        budget = TrainingBudget()
        assert budget.max_epochs == 30
        assert budget.patience == 3
        assert budget.loss == "categorical-cross-entropy"

    def test_patience_cannot_exceed_epochs(self):
        with pytest.raises(ConfigurationError):
            TrainingBudget(max_epochs=2, patience=3)
