"""Evolutionary search over selective fine-tuning configurations.

The library searches per-block freeze decisions and learning-rate multipliers
for transfer learning, delegating fitness evaluation (actual fine-tuning) to
pluggable trainer backends over a newline-delimited wire protocol, with
deterministic surrogate oracles for desk-scale verification.
"""

from .endpoints import (
    MaskMatchSurrogate,
    ProcessEndpoint,
    SphereSurrogate,
    TrainerEndpoint,
    random_mask_match_instance,
    surrogate_mask_match,
    surrogate_sphere,
)
from .engine import (
    EngineConfig,
    GenerationReport,
    SearchResult,
    adaptation,
    crossover,
    exploitation,
    initialize_population,
    mutation,
    run_search,
    select_elites,
)
from .errors import (
    BioTuneError,
    CheckpointError,
    ConfigurationError,
    EvaluationError,
    ProtocolError,
    RunInterrupted,
    TrainerProcessError,
)
from .fitness import FitnessRecord, TrainingBudget, aggregate_phi, evaluate
from .genotype import (
    BlockSpec,
    FineTuneConfig,
    Genotype,
    as_genotype,
    decode,
    importance_weights,
    selection_mask,
    trainable_fraction,
)
from .partition import PartitionPlan, build_partition, fold_for_generation, load_labels_file
from .protocol import (
    EvaluateRequest,
    EvaluateResponse,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)
from .search import BioTuneSearch

__version__ = "0.1.0"

__all__ = [
    "BioTuneSearch",
    "BlockSpec",
    "EngineConfig",
    "EvaluateRequest",
    "EvaluateResponse",
    "FineTuneConfig",
    "FitnessRecord",
    "GenerationReport",
    "Genotype",
    "MaskMatchSurrogate",
    "PartitionPlan",
    "ProcessEndpoint",
    "SearchResult",
    "SphereSurrogate",
    "TrainerEndpoint",
    "TrainingBudget",
    "adaptation",
    "aggregate_phi",
    "as_genotype",
    "build_partition",
    "crossover",
    "decode",
    "decode_request",
    "decode_response",
    "encode_request",
    "encode_response",
    "evaluate",
    "exploitation",
    "fold_for_generation",
    "importance_weights",
    "initialize_population",
    "load_labels_file",
    "mutation",
    "random_mask_match_instance",
    "run_search",
    "select_elites",
    "selection_mask",
    "surrogate_mask_match",
    "surrogate_sphere",
    "trainable_fraction",
    # errors
    "BioTuneError",
    "CheckpointError",
    "ConfigurationError",
    "EvaluationError",
    "ProtocolError",
    "RunInterrupted",
    "TrainerProcessError",
]
