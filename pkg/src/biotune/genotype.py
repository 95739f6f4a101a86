"""Genotype encoding of fine-tuning configurations and its decoder.

A genotype is a real vector in [0, 1] with one importance gene per model
block plus a trailing freeze-threshold gene. Decoding turns it into a
per-block selection mask (frozen / fine-tuned), an exponential learning-rate
weight in [0.1, 10], and the effective learning rate for each block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import check_unit_interval, check_positive_int
from .errors import ConfigurationError

# Learning-rate weights span two decades: 10**(2*(gene - 0.5)) in [0.1, 10].
WEIGHT_EXPONENT_SPAN = 2.0


@dataclass(frozen=True, eq=False)
class Genotype:
    """Immutable gene vector: ``block_count`` importance genes + freeze threshold.

    ``genes[:-1]`` are the per-block importance genes, ``genes[-1]`` is the
    freeze threshold. All entries lie in [0, 1].
    """

    genes: np.ndarray

    def __post_init__(self):
        arr = check_unit_interval(self.genes, "genes")
        if arr.size < 2:
            raise ConfigurationError(
                "genotype needs at least one block gene and the threshold gene"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "genes", arr)

    @property
    def block_count(self) -> int:
        return self.genes.size - 1

    @property
    def freeze_threshold(self) -> float:
        return float(self.genes[-1])

    def key(self) -> bytes:
        """Byte representation usable as an exact-identity cache key."""
        return self.genes.tobytes()

    def tolist(self) -> list[float]:
        return self.genes.tolist()


def as_genotype(values) -> Genotype:
    """Coerce an array-like of genes into a validated :class:`Genotype`."""
    if isinstance(values, Genotype):
        return values
    return Genotype(np.asarray(values, dtype=np.float64).copy())


@dataclass(frozen=True)
class BlockSpec:
    """Static description of the model's block grouping.

    Blocks are supplied by configuration (the trainer owns the actual
    grouping); the library never introspects a model. ``base_rates`` are the
    per-block base learning rates the decoded weights multiply.
    """

    block_count: int
    base_rates: np.ndarray
    block_names: tuple[str, ...] = ()
    param_counts: np.ndarray | None = None

    def __post_init__(self):
        check_positive_int(self.block_count, "block_count")
        rates = np.asarray(self.base_rates, dtype=np.float64)
        if rates.shape != (self.block_count,):
            raise ConfigurationError(
                f"base_rates must have length block_count={self.block_count}, "
                f"got shape {rates.shape}"
            )
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0.0):
            raise ConfigurationError("base_rates must be strictly positive and finite")
        rates.flags.writeable = False
        object.__setattr__(self, "base_rates", rates)

        names = tuple(self.block_names) if self.block_names else tuple(
            f"block{i}" for i in range(self.block_count)
        )
        if len(names) != self.block_count:
            raise ConfigurationError("block_names length must equal block_count")
        object.__setattr__(self, "block_names", names)

        if self.param_counts is not None:
            counts = np.asarray(self.param_counts, dtype=np.int64)
            if counts.shape != (self.block_count,) or np.any(counts < 0):
                raise ConfigurationError(
                    "param_counts must be non-negative with length block_count"
                )
            counts.flags.writeable = False
            object.__setattr__(self, "param_counts", counts)

    @property
    def genotype_length(self) -> int:
        return self.block_count + 1


@dataclass(frozen=True)
class FineTuneConfig:
    """Decoded phenotype: per-block mask, weight, effective multiplier, rate.

    Invariants: ``eta = mask * weights`` elementwise, ``rates = eta * base_rates``,
    and frozen blocks (mask 0) always carry rate 0.
    """

    mask: np.ndarray
    weights: np.ndarray
    eta: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        for name in ("mask", "weights", "eta", "rates"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def block_count(self) -> int:
        return self.mask.size


def selection_mask(genotype: Genotype | Sequence[float]) -> np.ndarray:
    """Per-block 0/1 mask: a block is frozen when its gene is <= the threshold.

    The boundary is inclusive (gene equal to the threshold freezes the block),
    and the threshold gene itself is not part of the output.
    """
    g = as_genotype(genotype)
    return (g.genes[:-1] > g.genes[-1]).astype(np.int8)


def importance_weights(genotype: Genotype | Sequence[float]) -> np.ndarray:
    """Per-block learning-rate weights 10**(2*(gene - 0.5)), always in [0.1, 10]."""
    g = as_genotype(genotype)
    return np.power(10.0, WEIGHT_EXPONENT_SPAN * (g.genes[:-1] - 0.5))


def decode(genotype: Genotype | Sequence[float], spec: BlockSpec) -> FineTuneConfig:
    """Decode a genotype into a :class:`FineTuneConfig` against ``spec``.

    Pure function: identical inputs give bitwise-identical outputs.
    """
    g = as_genotype(genotype)
    if g.genes.size != spec.genotype_length:
        raise ConfigurationError(
            f"genotype length {g.genes.size} does not match "
            f"block_count+1={spec.genotype_length}"
        )
    mask = selection_mask(g)
    weights = importance_weights(g)
    eta = mask * weights
    rates = eta * spec.base_rates
    return FineTuneConfig(mask=mask, weights=weights, eta=eta, rates=rates)


def trainable_fraction(config: FineTuneConfig, param_counts) -> float:
    """Fraction of parameters left trainable by ``config.mask``.

    ``param_counts`` gives per-block parameter counts; returns the count-weighted
    share of unfrozen blocks.
    """
    counts = np.asarray(param_counts, dtype=np.float64)
    if counts.shape != (config.block_count,):
        raise ConfigurationError(
            f"param_counts must have length {config.block_count}, got shape {counts.shape}"
        )
    if np.any(counts < 0):
        raise ConfigurationError("param_counts must be non-negative")
    total = counts.sum()
    if total == 0:
        raise ConfigurationError("param_counts sum to zero; trainable fraction undefined")
    return float((config.mask * counts).sum() / total)
