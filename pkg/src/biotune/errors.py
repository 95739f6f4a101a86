"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 2,
TrainerProcessError -> 3, anything else -> 4.
"""


class BioTuneError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BioTuneError, ValueError):
    """Invalid configuration value, shape mismatch, or malformed config file."""


class ProtocolError(BioTuneError):
    """Malformed or invalid wire message.

    The offending payload, when available, is preserved on ``payload``.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class EvaluationError(BioTuneError):
    """A fitness evaluation failed; carries the genotype id for diagnostics."""

    def __init__(self, message, genotype_id=""):
        super().__init__(message)
        self.genotype_id = genotype_id


class TrainerProcessError(BioTuneError):
    """The trainer backend is unusable (failed to launch, died, or closed its pipes)."""


class CheckpointError(BioTuneError):
    """Checkpoint unreadable or inconsistent with the run configuration."""


class RunInterrupted(BioTuneError):
    """The search stopped early; a resumable checkpoint was written."""
