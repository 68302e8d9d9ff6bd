"""Shared exception types."""


class EcmError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EcmError):
    """Tensor shapes or axes do not satisfy an op's contract."""


class ContractError(EcmError):
    """An operation was called in a way that violates its contract."""


class NonFiniteError(EcmError):
    """A forward op produced NaN or Inf."""


class CorpusError(EcmError):
    """Corpus or lexicon ingestion failed."""


class ConfigError(EcmError):
    """Invalid configuration values."""


class CheckpointError(EcmError):
    """Checkpoint file malformed or inconsistent with config."""


class TrainingError(EcmError):
    """Training cannot proceed (degenerate data, bad setup)."""


class TrainingDiverged(TrainingError):
    """Training aborted on a non-finite loss.

    Carries enough context to reproduce the failing step.
    """

    def __init__(self, message, epoch=None, batch_ids=None, lr=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_ids = batch_ids
        self.lr = lr
