"""Exception taxonomy. Each class maps to one CLI exit code."""


class DsfecError(Exception):
    """Base class for package errors."""


class ConfigError(DsfecError):
    """Invalid configuration: unknown preset, bad field, shape mismatch. Exit 2."""


class WeightsError(DsfecError):
    """Weight file unreadable, or tensors missing/mismatched. Exit 3."""


class DataError(DsfecError):
    """Malformed input data such as a radar frame CSV. Exit 4."""


class EvalInputError(DsfecError):
    """Evaluation inputs unusable: missing files, frame-id mismatch. Exit 5."""
