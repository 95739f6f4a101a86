"""Run lifecycle: config loading, endpoint construction, checkpoints, artifacts.

A run directory accumulates four CSV artifacts plus a checkpoint:

- ``generations.csv``: per-generation best/mean phi (and the best accuracy view)
- ``topk.csv``: top-k distinct configurations with genes, masks, weights, rates
- ``heatmap.csv``: per-block effective multipliers (eta) for the top-k rows
- ``params.csv``: trainable-parameter fractions for the top-k rows
- ``checkpoint.json``: resumable engine state, written after every generation

Checkpoints are written with write-then-rename so a crash never leaves a
truncated file, and they pin digests of the config file and partition plan so
a resume against edited inputs is refused.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .endpoints import (
    ProcessEndpoint,
    SphereSurrogate,
    TrainerEndpoint,
    random_mask_match_instance,
    surrogate_mask_match,
)
from .engine import EngineConfig, GenerationReport, SearchState, run_search
from .errors import CheckpointError, ConfigurationError, RunInterrupted
from .fitness import FitnessRecord, TrainingBudget
from .genotype import BlockSpec, Genotype, decode, trainable_fraction
from .partition import PartitionPlan, build_partition, load_labels_file

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.json"
CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class TrainerConfig:
    kind: str
    command: str | None = None
    surrogate: str | None = None
    options: dict | None = None
    capacity: int = 1
    timeout: float = 600.0
    retry_budget: int = 1
    send_sample_ids: bool = True


@dataclass(frozen=True)
class RunConfig:
    engine: EngineConfig
    blocks: BlockSpec
    budget: TrainingBudget
    labels: dict[str, str]
    trainer: TrainerConfig
    output_dir: Path
    top_k: int
    config_path: Path
    config_digest: str


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"config section '{name}' must be a mapping")
    return value


def _field(section: dict, section_name: str, key: str, kind, default):
    value = section.get(key, default)
    if value is None:
        return None
    try:
        if kind is int and isinstance(value, bool):
            raise TypeError("boolean is not an integer")
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(
            f"config field '{section_name}.{key}': expected {kind.__name__}, "
            f"got {value!r}"
        ) from exc


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML run config; all engine defaults are pre-filled,
    so a minimal file names only the blocks and the trainer."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config file {path} must contain a mapping")

    eng = _section(doc, "engine")
    engine = EngineConfig(
        population_size=_field(eng, "engine", "population_size", int, 10),
        elite_count=_field(eng, "engine", "elite_count", int, 3),
        max_generations=_field(eng, "engine", "max_generations", int, 10),
        seed_count=_field(eng, "engine", "seed_count", int, 3),
        perturbation_scale=_field(eng, "engine", "perturbation_scale", float, 0.25),
        rng_seed=_field(eng, "engine", "rng_seed", int, 0),
        fold_count=_field(eng, "engine", "fold_count", int, 3),
        mutation_rate=_field(eng, "engine", "mutation_rate", float, 0.4),
        adaptation_count=_field(eng, "engine", "adaptation_count", int, 1),
    )

    blocks_doc = _section(doc, "blocks")
    if not blocks_doc:
        raise ConfigurationError("config section 'blocks' is required")
    names = blocks_doc.get("names")
    count = blocks_doc.get("count", len(names) if names else None)
    if count is None:
        raise ConfigurationError("config field 'blocks.count' (or 'blocks.names') is required")
    count = int(count)
    base_rates = blocks_doc.get("base_rates", 0.001)
    if isinstance(base_rates, (int, float)):
        base_rates = [float(base_rates)] * count
    param_counts = blocks_doc.get("param_counts")
    try:
        blocks = BlockSpec(
            block_count=count,
            base_rates=np.asarray(base_rates, dtype=np.float64),
            block_names=tuple(str(n) for n in names) if names else (),
            param_counts=None if param_counts is None else np.asarray(param_counts),
        )
    except (ConfigurationError, ValueError) as exc:
        raise ConfigurationError(f"config section 'blocks': {exc}") from exc

    bud = _section(doc, "budget")
    budget = TrainingBudget(
        max_epochs=_field(bud, "budget", "max_epochs", int, 30),
        patience=_field(bud, "budget", "patience", int, 3),
        loss=_field(bud, "budget", "loss", str, "categorical-cross-entropy"),
    )

    labels = _load_labels(doc, path.parent, engine.fold_count)

    trainer_doc = _section(doc, "trainer")
    if not trainer_doc:
        raise ConfigurationError("config section 'trainer' is required")
    kind = _field(trainer_doc, "trainer", "kind", str, None)
    if kind not in ("surrogate", "external-process"):
        raise ConfigurationError(
            f"config field 'trainer.kind' must be 'surrogate' or 'external-process', got {kind!r}"
        )
    trainer = TrainerConfig(
        kind=kind,
        command=_field(trainer_doc, "trainer", "command", str, None),
        surrogate=_field(trainer_doc, "trainer", "surrogate", str, None),
        options=_section(trainer_doc, "options") if "options" in trainer_doc else {},
        capacity=_field(trainer_doc, "trainer", "capacity", int, 1),
        timeout=_field(trainer_doc, "trainer", "timeout", float, 600.0),
        retry_budget=_field(trainer_doc, "trainer", "retry_budget", int, 1),
        send_sample_ids=bool(trainer_doc.get("send_sample_ids", True)),
    )
    if trainer.kind == "external-process" and not trainer.command:
        raise ConfigurationError("config field 'trainer.command' is required for external-process")
    if trainer.kind == "surrogate" and not trainer.surrogate:
        raise ConfigurationError("config field 'trainer.surrogate' is required for surrogate kind")

    output_dir = doc.get("output_dir")
    if not output_dir:
        raise ConfigurationError("config field 'output_dir' is required")
    output_path = Path(output_dir)
    if not output_path.is_absolute():
        output_path = path.parent / output_path

    return RunConfig(
        engine=engine,
        blocks=blocks,
        budget=budget,
        labels=labels,
        trainer=trainer,
        output_dir=output_path,
        top_k=_field(doc, "<root>", "top_k", int, 5),
        config_path=path.resolve(),
        config_digest=digest,
    )


def _load_labels(doc: dict, base_dir: Path, fold_count: int) -> dict[str, str]:
    part = _section(doc, "partition")
    sources = [k for k in ("labels_file", "labels", "synthetic") if k in part]
    if len(sources) > 1:
        raise ConfigurationError(
            "config section 'partition' must give at most one of labels_file, labels, synthetic"
        )
    if "labels_file" in part:
        labels_path = Path(part["labels_file"])
        if not labels_path.is_absolute():
            labels_path = base_dir / labels_path
        return load_labels_file(labels_path)
    if "labels" in part:
        inline = part["labels"]
        if not isinstance(inline, dict) or not inline:
            raise ConfigurationError("config field 'partition.labels' must be a non-empty mapping")
        return {str(k): str(v) for k, v in inline.items()}
    synth = part.get("synthetic", {}) or {}
    samples = _field(synth, "partition.synthetic", "samples", int, max(40 * fold_count, 120))
    classes = _field(synth, "partition.synthetic", "classes", int, 3)
    if samples < 1 or classes < 1:
        raise ConfigurationError("partition.synthetic samples and classes must be >= 1")
    return {f"sample-{i:05d}": f"class-{i % classes}" for i in range(samples)}


def build_endpoint(cfg: RunConfig) -> TrainerEndpoint:
    """Construct the evaluation backend described by ``cfg.trainer``."""
    trainer = cfg.trainer
    if trainer.kind == "external-process":
        return ProcessEndpoint(
            trainer.command,
            capacity=trainer.capacity,
            timeout=trainer.timeout,
            retry_budget=trainer.retry_budget,
        )
    options = dict(trainer.options or {})
    name = trainer.surrogate
    instance_seed = int(options.get("instance_seed", cfg.engine.rng_seed))
    if name == "sphere":
        optimum = options.get("optimum")
        if optimum is None:
            rng = np.random.default_rng(instance_seed)
            optimum = rng.uniform(0.0, 1.0, size=cfg.blocks.genotype_length)
        return SphereSurrogate(np.asarray(optimum, dtype=np.float64))
    if name == "mask-match":
        noise = float(options.get("noise", 0.0))
        if "target_mask" in options:
            return surrogate_mask_match(
                np.asarray(options["target_mask"]),
                noise=noise,
                base_rates=cfg.blocks.base_rates,
                target_exponents=options.get("target_exponents"),
                penalty_coeff=float(options.get("penalty_coeff", 0.25)),
                instance_seed=instance_seed,
            )
        return random_mask_match_instance(
            cfg.blocks.block_count,
            instance_seed=instance_seed,
            noise=noise,
            base_rates=cfg.blocks.base_rates,
        )
    raise ConfigurationError(
        f"config field 'trainer.surrogate': unknown surrogate {name!r} "
        "(expected 'sphere' or 'mask-match')"
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def plan_digest(plan: PartitionPlan) -> str:
    canonical = json.dumps(
        {
            "fold_count": plan.fold_count,
            "folds": [list(f) for f in plan.folds],
            "classes": sorted((k, str(v)) for k, v in plan.class_of.items()),
        },
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def write_checkpoint(
    cfg: RunConfig, plan: PartitionPlan, state: SearchState
) -> Path:
    path = cfg.output_dir / CHECKPOINT_NAME
    doc = {
        "format": CHECKPOINT_FORMAT,
        "complete": state.next_generation >= cfg.engine.max_generations,
        "config_path": str(cfg.config_path),
        "config_digest": cfg.config_digest,
        "plan_digest": plan_digest(plan),
        "state": state.to_dict(),
    }
    _atomic_write(path, json.dumps(doc))
    return path


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {doc.get('format')!r}")
    return doc


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def write_generations_csv(out_dir: Path, reports: Sequence[GenerationReport]) -> None:
    rows = []
    for r in reports:
        rows.append(
            [
                r.generation,
                r.fold_index,
                r.best_phi,
                float(np.mean(r.population_phis)),
                1.0 - r.best_phi,
            ]
        )
    _write_csv(
        out_dir / "generations.csv",
        ["generation", "fold_index", "best_phi", "mean_phi", "best_accuracy"],
        rows,
    )


def _topk(ranking, top_k):
    return ranking[: max(0, top_k)]


def write_topk_csv(
    out_dir: Path,
    ranking: Sequence[tuple[Genotype, FitnessRecord]],
    blocks: BlockSpec,
    top_k: int,
) -> None:
    gene_count = blocks.genotype_length
    header = ["rank", "genotype_id", "phi", "mean_accuracy", "generation", "fold_index"]
    header += [f"gene_{i}" for i in range(gene_count)]
    header += [f"mask_{b}" for b in range(blocks.block_count)]
    header += [f"weight_{b}" for b in range(blocks.block_count)]
    header += [f"eta_{b}" for b in range(blocks.block_count)]
    header += [f"rate_{b}" for b in range(blocks.block_count)]
    rows = []
    for rank, (genotype, record) in enumerate(_topk(ranking, top_k), start=1):
        config = decode(genotype, blocks)
        row = [
            rank,
            record.genotype_id,
            record.phi,
            record.mean_accuracy,
            record.generation,
            record.fold_index,
        ]
        row += genotype.tolist()
        row += [int(m) for m in config.mask]
        row += config.weights.tolist()
        row += config.eta.tolist()
        row += config.rates.tolist()
        rows.append(row)
    _write_csv(out_dir / "topk.csv", header, rows)


def write_heatmap_csv(
    out_dir: Path,
    ranking: Sequence[tuple[Genotype, FitnessRecord]],
    blocks: BlockSpec,
    top_k: int,
) -> None:
    header = ["rank", "genotype_id", *blocks.block_names]
    rows = []
    for rank, (genotype, record) in enumerate(_topk(ranking, top_k), start=1):
        config = decode(genotype, blocks)
        rows.append([rank, record.genotype_id, *config.eta.tolist()])
    _write_csv(out_dir / "heatmap.csv", header, rows)


def write_params_csv(
    out_dir: Path,
    ranking: Sequence[tuple[Genotype, FitnessRecord]],
    blocks: BlockSpec,
    top_k: int,
) -> None:
    # Without configured parameter counts every block weighs the same, so the
    # fraction degrades to the unfrozen share of blocks.
    counts = (
        blocks.param_counts
        if blocks.param_counts is not None
        else np.ones(blocks.block_count, dtype=np.int64)
    )
    header = ["rank", "genotype_id", "trainable_fraction", "trainable_params", "total_params"]
    rows = []
    for rank, (genotype, record) in enumerate(_topk(ranking, top_k), start=1):
        config = decode(genotype, blocks)
        fraction = trainable_fraction(config, counts)
        rows.append(
            [
                rank,
                record.genotype_id,
                fraction,
                int((config.mask * counts).sum()),
                int(counts.sum()),
            ]
        )
    _write_csv(out_dir / "params.csv", header, rows)


def _write_csv(path: Path, header: list, rows: list[list]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def write_final_artifacts(cfg: RunConfig, result_state: SearchState) -> None:
    from .engine import rank_entries

    ranking = rank_entries(result_state.entries)
    write_generations_csv(cfg.output_dir, result_state.reports)
    write_topk_csv(cfg.output_dir, ranking, cfg.blocks, cfg.top_k)
    write_heatmap_csv(cfg.output_dir, ranking, cfg.blocks, cfg.top_k)
    write_params_csv(cfg.output_dir, ranking, cfg.blocks, cfg.top_k)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run(config_path: str | Path, *, stop_after_generation: int | None = None) -> Path:
    """Execute a full search run; returns the output directory.

    ``stop_after_generation`` aborts the run right after that generation's
    checkpoint is written (used to exercise interrupt/resume paths).
    """
    cfg = load_run_config(config_path)
    plan = build_partition(cfg.labels, cfg.engine.fold_count, seed=cfg.engine.rng_seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    endpoint = build_endpoint(cfg)
    try:
        result = _drive(cfg, plan, endpoint, None, stop_after_generation)
    finally:
        endpoint.close()
    write_final_artifacts(cfg, result.state)
    logger.info("run complete; artifacts in %s", cfg.output_dir)
    return cfg.output_dir


def resume(checkpoint_path: str | Path) -> Path:
    """Continue an interrupted run from its checkpoint.

    Refuses to resume when the config file or partition no longer match the
    digests pinned in the checkpoint.
    """
    doc = load_checkpoint(checkpoint_path)
    cfg = load_run_config(doc["config_path"])
    if cfg.config_digest != doc["config_digest"]:
        raise CheckpointError(
            f"config file {cfg.config_path} changed since the checkpoint was written "
            f"(digest {cfg.config_digest[:12]}… != {doc['config_digest'][:12]}…); "
            "refusing to resume"
        )
    plan = build_partition(cfg.labels, cfg.engine.fold_count, seed=cfg.engine.rng_seed)
    if plan_digest(plan) != doc["plan_digest"]:
        raise CheckpointError("partition plan changed since the checkpoint was written")
    state = SearchState.from_dict(doc["state"])

    if state.next_generation >= cfg.engine.max_generations:
        logger.info("run already complete; nothing to resume")
        if not (cfg.output_dir / "topk.csv").exists():
            write_final_artifacts(cfg, state)
        return cfg.output_dir

    endpoint = build_endpoint(cfg)
    try:
        result = _drive(cfg, plan, endpoint, state, None)
    finally:
        endpoint.close()
    write_final_artifacts(cfg, result.state)
    logger.info("resumed run complete; artifacts in %s", cfg.output_dir)
    return cfg.output_dir


def _drive(cfg, plan, endpoint, state, stop_after_generation):
    def on_generation(report: GenerationReport, current: SearchState) -> None:
        write_checkpoint(cfg, plan, current)
        write_generations_csv(cfg.output_dir, current.reports)
        if stop_after_generation is not None and report.generation >= stop_after_generation:
            raise RunInterrupted(
                f"stopped after generation {report.generation}; checkpoint written"
            )

    return run_search(
        cfg.engine,
        cfg.blocks,
        plan,
        endpoint,
        cfg.budget,
        state=state,
        send_sample_ids=cfg.trainer.send_sample_ids,
        on_generation=on_generation,
    )


def report(run_dir: str | Path) -> str:
    """Human-readable summary of a finished run directory."""
    run_dir = Path(run_dir)
    topk_rows = _read_csv(run_dir / "topk.csv")
    if not topk_rows:
        raise ConfigurationError(f"{run_dir}/topk.csv has no configurations")
    heatmap_rows = _read_csv(run_dir / "heatmap.csv")
    params_rows = _read_csv(run_dir / "params.csv")
    generations = _read_csv(run_dir / "generations.csv")

    best = topk_rows[0]
    block_names = list(heatmap_rows[0].keys())[2:] if heatmap_rows else []
    n_blocks = len(block_names)
    lines = []
    lines.append(f"Run summary: {run_dir}")
    lines.append(
        f"  generations: {len(generations)}, configurations ranked: {len(topk_rows)} (top-k)"
    )
    best_phi = float(best["phi"])
    lines.append(
        f"  best configuration: {best['genotype_id']} "
        f"(phi {best_phi:.6f}, accuracy {1.0 - best_phi:.6f}, "
        f"found at generation {best['generation']} on fold {best['fold_index']})"
    )
    if params_rows:
        lines.append(f"  trainable fraction: {float(params_rows[0]['trainable_fraction']):.4f}")
    lines.append("")
    lines.append(f"  {'block':<18} {'state':<8} {'weight':>10} {'rate':>12}")
    for b in range(n_blocks):
        frozen = int(best[f"mask_{b}"]) == 0
        state = "frozen" if frozen else "tuned"
        weight = "-" if frozen else f"{float(best[f'weight_{b}']):.4f}"
        rate = f"{float(best[f'rate_{b}']):.6g}"
        lines.append(f"  {block_names[b]:<18} {state:<8} {weight:>10} {rate:>12}")
    lines.append("")
    lines.append("  top configurations (phi / accuracy):")
    for row in topk_rows:
        phi = float(row["phi"])
        lines.append(
            f"    #{row['rank']}: {row['genotype_id']} phi={phi:.6f} acc={1.0 - phi:.6f}"
        )
    return "\n".join(lines)


def _read_csv(path: Path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))
    except OSError as exc:
        raise ConfigurationError(f"cannot read artifact {path}: {exc}") from exc
