"""Exception types shared across the toolkit."""


class LabelQCError(ValueError):
    """Base class for all labelqc errors."""


class SchemaError(LabelQCError):
    """A CSV header or config document does not match the expected schema."""


class ParseError(LabelQCError):
    """A row of an input file could not be parsed; the message names the row."""


class FormatError(LabelQCError):
    """A serialized artifact (data card, model file) is internally inconsistent."""


class StratificationError(LabelQCError):
    """A class is too small for the requested stratified split or folding."""


class InjectionError(LabelQCError):
    """Label corruption could not be carried out for a selected sample."""


class TrainingError(LabelQCError):
    """Classifier training is impossible on the given dataset."""


class EstimationError(LabelQCError):
    """A transition-matrix or confident-joint estimate is undefined."""


class ConfigError(LabelQCError):
    """A detector or experiment configuration is invalid or incomplete."""


class EvaluationError(LabelQCError):
    """A grid cell could not be evaluated (e.g. cleaning removed all data)."""


class SessionError(LabelQCError):
    """The review session is missing, busy, or received an invalid request."""
