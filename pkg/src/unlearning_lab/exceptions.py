from __future__ import annotations


class LabError(Exception):
    """Base exception for every lab failure."""


class ConfigurationError(LabError):
    """Raised when a configuration is invalid or its quotas cannot be met."""


class GraphLookupError(LabError, LookupError):
    """Raised when an entity or relation is not part of the graph."""


class TripleParseError(LabError):
    """Raised when a triple or schema file line cannot be parsed."""

    def __init__(self, message: str, *, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class TypingViolationError(LabError):
    """Raised when a triple violates its relation's domain or range."""

    def __init__(self, message: str, *, triple: tuple[str, str, str]) -> None:
        super().__init__(f"{message}: {triple}")
        self.triple = triple


class TargetSelectionError(LabError):
    """Raised when fewer chain-bearing targets exist than were requested."""

    def __init__(self, message: str, *, achievable: int) -> None:
        super().__init__(f"{message} (achievable maximum: {achievable})")
        self.achievable = achievable


class ProbeGenerationError(LabError):
    """Raised when probes cannot be rendered for a case."""


class DatasetFormatError(LabError):
    """Raised when a dataset record is malformed."""

    def __init__(self, message: str, *, record_index: int) -> None:
        super().__init__(f"record {record_index}: {message}")
        self.record_index = record_index


class ProbeScoringError(LabError):
    """Raised when the knowledge scorer fails on a probe."""

    def __init__(self, message: str, *, probe_id: str) -> None:
        super().__init__(f"{probe_id}: {message}")
        self.probe_id = probe_id


class TokenizerError(LabError):
    """Raised for out-of-vocabulary words in the closed-world tokenizer."""


class SequenceLengthError(LabError):
    """Raised when an input exceeds the model's maximum sequence length."""


class PreconditionError(LabError):
    """Raised when an operation's precondition does not hold."""


class NumericError(LabError):
    """Raised when a loss, gradient or parameter stops being finite."""


class TrainingDivergedError(NumericError):
    """Raised when a training run diverges; carries diagnostics."""

    def __init__(self, message: str, *, diagnostics: dict[str, float | int | str]) -> None:
        super().__init__(f"{message} {diagnostics}")
        self.diagnostics = diagnostics


class CheckpointError(LabError):
    """Base exception for checkpoint file problems."""


class CheckpointVersionError(CheckpointError):
    """Raised when a checkpoint has an unknown magic or format version."""


class CheckpointTruncatedError(CheckpointError):
    """Raised when a checkpoint file is shorter than its header declares."""


class CheckpointChecksumError(CheckpointError):
    """Raised when a checkpoint's trailing checksum does not match."""


class AdapterError(LabError):
    """Raised for invalid low-rank adapter operations."""


class NeighborPoolError(LabError):
    """Raised when no correlated neighbor candidates exist for a target."""


class CorruptionError(LabError):
    """Raised when the world has too few distant entities for corruption."""


class IcuWrapError(LabError):
    """Raised when a question is already wrapped with the ICU instruction."""


class MetricInputError(LabError):
    """Raised when a metric receives empty or mismatched inputs."""


class MissingArtifactError(LabError):
    """Raised when an upstream pipeline artifact does not exist."""
