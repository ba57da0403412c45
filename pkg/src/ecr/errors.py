"""Shared exception types."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or out of range."""


class ParseError(ValueError):
    """An input file could not be parsed; the message names the offending line."""


class ValidationError(ValueError):
    """A structurally valid record violates a data invariant."""


class LayoutError(ValueError):
    """A prompt could not be laid out within the requested length budget."""


class LengthError(ValueError):
    """An input sequence exceeds the encoder's position table."""


class InputError(ValueError):
    """Mismatched or malformed arguments to a scoring or clustering call."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite during optimization."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""
