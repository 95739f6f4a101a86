"""Generational evolutionary loop over fine-tuning genotypes.

Each generation is evaluated on the fold scheduled for it, the best
individuals survive unchanged (elitism), and offspring are produced by four
operators: exploitation (shrinking-radius local perturbation of elites),
uniform crossover between elites, per-gene Gaussian mutation of crossover
children, and adaptation (fresh uniform draws replacing the weakest slots).
Survivors are the best ``population_size`` of parents plus offspring.

The loop is deterministic given (config, blocks, plan, endpoint behavior):
all randomness flows from one seeded generator whose state is checkpointed at
generation boundaries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .fitness import FitnessRecord, TrainingBudget, evaluate
from .genotype import BlockSpec, Genotype
from .partition import PartitionPlan, fold_for_generation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    """Search hyperparameters; defaults are the reference desk-scale settings."""

    population_size: int = 10
    elite_count: int = 3
    max_generations: int = 10
    seed_count: int = 3
    perturbation_scale: float = 0.25
    rng_seed: int = 0
    fold_count: int = 3
    mutation_rate: float = 0.4
    adaptation_count: int = 1

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigurationError("population_size must be >= 2")
        if not 1 <= self.elite_count < self.population_size:
            raise ConfigurationError(
                f"elite_count must be in [1, population_size), got {self.elite_count}"
            )
        if self.max_generations < 1:
            raise ConfigurationError("max_generations must be >= 1")
        if self.seed_count < 1:
            raise ConfigurationError("seed_count must be >= 1")
        if not 0.0 < self.perturbation_scale <= 1.0:
            raise ConfigurationError("perturbation_scale must lie in (0, 1]")
        if self.fold_count < 1:
            raise ConfigurationError("fold_count must be >= 1")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigurationError("mutation_rate must lie in [0, 1]")
        if self.adaptation_count < 0:
            raise ConfigurationError("adaptation_count must be >= 0")

    def trainer_seeds(self) -> tuple[int, ...]:
        """Seeds sent to the trainer; fixed for the whole run so phi values
        are comparable across generations and evaluations are cacheable."""
        return tuple(self.rng_seed * 1000 + i for i in range(self.seed_count))


@dataclass(frozen=True)
class GenerationReport:
    """Summary of one generation's evaluated candidate pool."""

    generation: int
    fold_index: int
    best_phi: float
    best_genotype: Genotype
    population_phis: tuple[float, ...]

    def __post_init__(self):
        if self.population_phis and not math.isclose(
            self.best_phi, min(self.population_phis), rel_tol=0.0, abs_tol=0.0
        ):
            raise ConfigurationError("best_phi must equal min(population_phis)")


# ---------------------------------------------------------------------------
# Evolutionary operators
# ---------------------------------------------------------------------------


def initialize_population(
    config: EngineConfig, block_count: int, rng: np.random.Generator | None = None
) -> list[Genotype]:
    """Draw ``population_size`` genotypes of length ``block_count + 1`` i.i.d.
    uniform on [0, 1] from the engine's seeded generator."""
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    length = block_count + 1
    return [
        Genotype(rng.uniform(0.0, 1.0, size=length))
        for _ in range(config.population_size)
    ]


def select_elites(
    population: Sequence[tuple[Genotype, float]], elite_count: int
) -> list[Genotype]:
    """The ``elite_count`` genotypes with smallest phi; ties keep insertion order."""
    if elite_count >= len(population):
        raise ConfigurationError(
            f"elite_count ({elite_count}) must be smaller than the population "
            f"({len(population)})"
        )
    for _, phi in population:
        if phi is None or not math.isfinite(phi):
            raise ConfigurationError("population contains unevaluated individuals")
    ranked = sorted(population, key=lambda pair: pair[1])  # stable: insertion-order ties
    return [genotype for genotype, _ in ranked[:elite_count]]


def exploitation(
    elite: Genotype, radius: float, rng: np.random.Generator
) -> Genotype:
    """Local search child: per-gene uniform noise on [-radius, +radius], clamped."""
    if radius <= 0:
        raise ConfigurationError("exploitation radius must be > 0")
    noise = rng.uniform(-radius, radius, size=elite.genes.size)
    return Genotype(np.clip(elite.genes + noise, 0.0, 1.0))


def crossover(
    parent_a: Genotype, parent_b: Genotype, rng: np.random.Generator
) -> Genotype:
    """Uniform crossover: each gene copied from either parent with probability 1/2."""
    if parent_a.genes.size != parent_b.genes.size:
        raise ConfigurationError("crossover parents must have equal gene counts")
    take_a = rng.random(parent_a.genes.size) < 0.5
    return Genotype(np.where(take_a, parent_a.genes, parent_b.genes))


def mutation(
    genotype: Genotype, rate: float, scale: float, rng: np.random.Generator
) -> Genotype:
    """Per-gene Gaussian mutation: with probability ``rate`` add N(0, scale), clamp."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigurationError("mutation rate must lie in [0, 1]")
    if scale <= 0:
        raise ConfigurationError("mutation scale must be > 0")
    hit = rng.random(genotype.genes.size) < rate
    noise = rng.normal(0.0, scale, size=genotype.genes.size)
    return Genotype(np.clip(genotype.genes + hit * noise, 0.0, 1.0))


def adaptation(
    population: Sequence[tuple[Genotype, float]],
    count: int,
    rng: np.random.Generator,
) -> list[Genotype]:
    """Replace the ``count`` worst-phi individuals with fresh uniform genotypes."""
    if count >= len(population) and count > 0:
        raise ConfigurationError("adaptation count must be smaller than the population")
    genotypes = [g for g, _ in population]
    if count == 0:
        return genotypes
    order = sorted(
        range(len(population)), key=lambda i: (-population[i][1], -i)
    )
    for i in order[:count]:
        genotypes[i] = Genotype(rng.uniform(0.0, 1.0, size=genotypes[i].genes.size))
    return genotypes


# ---------------------------------------------------------------------------
# Search loop
# ---------------------------------------------------------------------------


@dataclass
class Individual:
    id: int
    genotype: Genotype


@dataclass(frozen=True)
class EvaluationEntry:
    """One evaluation event: which individual, which genes, what came back."""

    individual_id: int
    genotype: Genotype
    record: FitnessRecord


@dataclass
class SearchState:
    """Everything needed to continue a run at a generation boundary."""

    next_generation: int
    id_counter: int
    rng_state: dict
    population: list[Individual]
    entries: list[EvaluationEntry]
    cache: dict[tuple[bytes, int], int] = field(default_factory=dict)
    reports: list[GenerationReport] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "next_generation": self.next_generation,
            "id_counter": self.id_counter,
            "rng_state": self.rng_state,
            "population": [
                {"id": ind.id, "genes": ind.genotype.tolist()} for ind in self.population
            ],
            "entries": [
                {
                    "individual_id": e.individual_id,
                    "genes": e.genotype.tolist(),
                    "record": e.record.to_dict(),
                }
                for e in self.entries
            ],
            "cache": [
                {"entry": index, "fold_index": fold}
                for (_, fold), index in self.cache.items()
            ],
            "reports": [
                {
                    "generation": r.generation,
                    "fold_index": r.fold_index,
                    "best_phi": r.best_phi,
                    "best_genes": r.best_genotype.tolist(),
                    "population_phis": list(r.population_phis),
                }
                for r in self.reports
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchState":
        entries = [
            EvaluationEntry(
                individual_id=int(e["individual_id"]),
                genotype=Genotype(np.asarray(e["genes"], dtype=np.float64)),
                record=FitnessRecord.from_dict(e["record"]),
            )
            for e in doc["entries"]
        ]
        cache: dict[tuple[bytes, int], int] = {}
        for item in doc["cache"]:
            entry = entries[int(item["entry"])]
            cache[(entry.genotype.key(), int(item["fold_index"]))] = int(item["entry"])
        return cls(
            next_generation=int(doc["next_generation"]),
            id_counter=int(doc["id_counter"]),
            rng_state=doc["rng_state"],
            population=[
                Individual(
                    id=int(p["id"]),
                    genotype=Genotype(np.asarray(p["genes"], dtype=np.float64)),
                )
                for p in doc["population"]
            ],
            entries=entries,
            cache=cache,
            reports=[
                GenerationReport(
                    generation=int(r["generation"]),
                    fold_index=int(r["fold_index"]),
                    best_phi=float(r["best_phi"]),
                    best_genotype=Genotype(np.asarray(r["best_genes"], dtype=np.float64)),
                    population_phis=tuple(float(p) for p in r["population_phis"]),
                )
                for r in doc["reports"]
            ],
        )


@dataclass(frozen=True)
class SearchResult:
    """Final ranking plus the full evaluation history."""

    ranking: list[tuple[Genotype, FitnessRecord]]
    reports: list[GenerationReport]
    state: SearchState

    @property
    def best(self) -> tuple[Genotype, FitnessRecord]:
        return self.ranking[0]


def run_search(
    config: EngineConfig,
    spec: BlockSpec,
    plan: PartitionPlan,
    endpoint,
    budget: TrainingBudget | None = None,
    *,
    state: SearchState | None = None,
    send_sample_ids: bool = True,
    on_generation: Callable[[GenerationReport, SearchState], None] | None = None,
) -> SearchResult:
    """Run (or continue) the generational loop and return the global ranking.

    ``on_generation`` fires after each completed generation with the report
    and the checkpointable state; exceptions it raises abort the run cleanly.
    The ranking covers every distinct gene vector evaluated across all
    generations, ascending by its best phi.
    """
    if plan.fold_count != config.fold_count:
        raise ConfigurationError(
            f"partition has {plan.fold_count} folds but the engine is configured "
            f"for {config.fold_count}"
        )
    budget = budget or TrainingBudget()
    seeds = config.trainer_seeds()

    rng = np.random.default_rng(config.rng_seed)
    if state is None:
        genotypes = initialize_population(config, spec.block_count, rng)
        state = SearchState(
            next_generation=0,
            id_counter=len(genotypes),
            rng_state={},
            population=[Individual(i, g) for i, g in enumerate(genotypes)],
            entries=[],
        )
    else:
        rng.bit_generator.state = state.rng_state

    def new_individual(genotype: Genotype) -> Individual:
        ind = Individual(state.id_counter, genotype)
        state.id_counter += 1
        return ind

    def evaluate_cached(ind: Individual, fold: int, generation: int) -> FitnessRecord:
        key = (ind.genotype.key(), fold)
        hit = state.cache.get(key)
        if hit is not None:
            return state.entries[hit].record
        record = evaluate(
            ind.genotype,
            spec,
            endpoint,
            fold,
            seeds,
            budget,
            train_sample_ids=plan.fold_ids(fold) if send_sample_ids else None,
            fold_ref=None if send_sample_ids else f"fold-{fold}",
            genotype_id=f"ind-{ind.id:05d}",
            generation=generation,
        )
        state.cache[key] = len(state.entries)
        state.entries.append(EvaluationEntry(ind.id, ind.genotype, record))
        return record

    n_children = config.population_size - config.elite_count
    n_exploit = (n_children + 1) // 2
    n_crossmut = n_children - n_exploit
    # Keep at least one non-random child; at pop 10 / 3 elites this leaves the
    # configured single adaptation replacement untouched.
    n_adapt = min(config.adaptation_count, max(n_children - 1, 0))

    for g in range(state.next_generation, config.max_generations):
        fold = fold_for_generation(g, config.fold_count)
        parent_evals = [
            (ind, evaluate_cached(ind, fold, g)) for ind in state.population
        ]
        elite_pairs = [(ind.genotype, rec.phi) for ind, rec in parent_evals]
        elites = select_elites(elite_pairs, config.elite_count)

        radius = config.perturbation_scale * (1.0 - g / config.max_generations)
        children: list[Genotype] = []
        for i in range(n_exploit):
            children.append(exploitation(elites[i % len(elites)], radius, rng))
        for _ in range(n_crossmut):
            if len(elites) >= 2:
                ia, ib = rng.choice(len(elites), size=2, replace=False)
                child = crossover(elites[ia], elites[ib], rng)
            else:
                child = elites[0]
            children.append(
                mutation(child, config.mutation_rate, config.perturbation_scale, rng)
            )
        for k in range(n_adapt):
            children[len(children) - 1 - k] = Genotype(
                rng.uniform(0.0, 1.0, size=spec.genotype_length)
            )

        child_inds = [new_individual(c) for c in children]
        child_evals = [(ind, evaluate_cached(ind, fold, g)) for ind in child_inds]

        pool = parent_evals + child_evals
        # Truncation by phi with elites pinned; remaining ties prefer the
        # newer individual, which lets the population drift across fitness
        # plateaus instead of stalling on the oldest occupants.
        elite_pool = sorted(parent_evals, key=lambda pair: (pair[1].phi, pair[0].id))
        elite_inds = [ind for ind, _ in elite_pool[: config.elite_count]]
        elite_id_set = {ind.id for ind in elite_inds}
        rest = [pair for pair in pool if pair[0].id not in elite_id_set]
        rest_sorted = sorted(rest, key=lambda pair: (pair[1].phi, -pair[0].id))
        survivors = elite_inds + [
            ind for ind, _ in rest_sorted[: config.population_size - config.elite_count]
        ]
        state.population = survivors
        state.next_generation = g + 1
        state.rng_state = rng.bit_generator.state

        best_ind, best_rec = min(pool, key=lambda pair: (pair[1].phi, pair[0].id))
        report = GenerationReport(
            generation=g,
            fold_index=fold,
            best_phi=best_rec.phi,
            best_genotype=best_ind.genotype,
            population_phis=tuple(rec.phi for _, rec in pool),
        )
        state.reports.append(report)
        logger.info(
            "generation %d (fold %d): best phi %.6f, mean phi %.6f",
            g,
            fold,
            report.best_phi,
            float(np.mean(report.population_phis)),
        )
        if on_generation is not None:
            on_generation(report, state)

    return SearchResult(
        ranking=rank_entries(state.entries),
        reports=list(state.reports),
        state=state,
    )


def rank_entries(
    entries: Sequence[EvaluationEntry],
) -> list[tuple[Genotype, FitnessRecord]]:
    """Distinct gene vectors ascending by their best phi (ties by first seen)."""
    best: dict[bytes, EvaluationEntry] = {}
    order: dict[bytes, int] = {}
    for index, entry in enumerate(entries):
        key = entry.genotype.key()
        if key not in best or entry.record.phi < best[key].record.phi:
            best[key] = entry
        order.setdefault(key, index)
    ranked = sorted(
        best.items(), key=lambda item: (item[1].record.phi, order[item[0]])
    )
    return [(entry.genotype, entry.record) for _, entry in ranked]
