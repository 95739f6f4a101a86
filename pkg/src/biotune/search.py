"""scikit-learn style front end for the evolutionary fine-tuning search.

``BioTuneSearch`` behaves like a model-selection searcher: constructor
parameters are stored verbatim (so ``get_params``/``set_params``/``clone``
work), ``fit`` runs the search against the configured trainer endpoint, and
the discovered configurations land in trailing-underscore attributes.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from ._validation import check_lengths_match
from .endpoints import TrainerEndpoint
from .engine import EngineConfig, run_search
from .errors import ConfigurationError
from .fitness import TrainingBudget
from .genotype import BlockSpec, decode
from .partition import build_partition


class BioTuneSearch(BaseEstimator):
    """Evolutionary search over per-block freeze decisions and learning rates.

    Parameters mirror the engine configuration; ``blocks`` describes the
    trainable block grouping and ``endpoint`` is the trainer backend (an
    external process or an in-process surrogate oracle).

    Attributes set by :meth:`fit`:

    - ``best_genotype_``, ``best_config_``, ``best_phi_``, ``best_accuracy_``
    - ``results_``: distinct configurations ascending by phi
    - ``generation_reports_``: per-generation summaries
    - ``partition_plan_``: the stratified folds used for training subsets
    """

    def __init__(
        self,
        blocks: BlockSpec | None = None,
        endpoint: TrainerEndpoint | None = None,
        population_size: int = 10,
        elite_count: int = 3,
        max_generations: int = 10,
        seed_count: int = 3,
        perturbation_scale: float = 0.25,
        mutation_rate: float = 0.4,
        adaptation_count: int = 1,
        fold_count: int = 3,
        max_epochs: int = 30,
        patience: int = 3,
        random_state: int = 0,
    ):
        self.blocks = blocks
        self.endpoint = endpoint
        self.population_size = population_size
        self.elite_count = elite_count
        self.max_generations = max_generations
        self.seed_count = seed_count
        self.perturbation_scale = perturbation_scale
        self.mutation_rate = mutation_rate
        self.adaptation_count = adaptation_count
        self.fold_count = fold_count
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def _engine_config(self) -> EngineConfig:
        return EngineConfig(
            population_size=self.population_size,
            elite_count=self.elite_count,
            max_generations=self.max_generations,
            seed_count=self.seed_count,
            perturbation_scale=self.perturbation_scale,
            rng_seed=self.random_state,
            fold_count=self.fold_count,
            mutation_rate=self.mutation_rate,
            adaptation_count=self.adaptation_count,
        )

    def fit(self, X, y=None):
        """Search for fine-tuning configurations.

        ``X`` is the sequence of training-sample identifiers and ``y`` their
        class labels (used only for stratified fold construction; the actual
        sample data lives with the trainer). ``X`` may instead be a mapping
        ``sample_id -> class``.
        """
        if self.blocks is None or self.endpoint is None:
            raise ConfigurationError("blocks and endpoint must be set before fit")
        if y is None:
            if not hasattr(X, "items"):
                raise ConfigurationError(
                    "pass labels via y, or give X as a sample_id -> class mapping"
                )
            labels = {str(k): v for k, v in X.items()}
        else:
            check_lengths_match(X, y, "sample ids vs labels")
            labels = {str(sid): cls for sid, cls in zip(X, y)}

        config = self._engine_config()
        plan = build_partition(labels, self.fold_count, seed=self.random_state)
        budget = TrainingBudget(max_epochs=self.max_epochs, patience=self.patience)
        result = run_search(config, self.blocks, plan, self.endpoint, budget)

        self.partition_plan_ = plan
        self.results_ = result.ranking
        self.generation_reports_ = result.reports
        self.n_evaluations_ = len(result.state.entries)
        best_genotype, best_record = result.best
        self.best_genotype_ = best_genotype
        self.best_record_ = best_record
        self.best_phi_ = best_record.phi
        self.best_accuracy_ = best_record.mean_accuracy
        self.best_config_ = decode(best_genotype, self.blocks)
        return self

    def top_configs(self, k: int = 5):
        """Decoded top-``k`` configurations as (genotype, record, config) triples."""
        if not hasattr(self, "results_"):
            raise ConfigurationError("fit must run before requesting top configurations")
        return [
            (genotype, record, decode(genotype, self.blocks))
            for genotype, record in self.results_[:k]
        ]
