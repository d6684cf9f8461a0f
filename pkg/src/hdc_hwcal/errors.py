"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class carries the category it
belongs to.
"""


class HDCError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidDimensionError(HDCError, ValueError):
    exit_code = 2


class IncompatibleError(HDCError, ValueError):
    """Operands disagree in dimension, representation or shape."""

    exit_code = 2


class EmptyInputError(HDCError, ValueError):
    exit_code = 2


class UndefinedSimilarityError(HDCError, ValueError):
    """Similarity requested for a zero-norm vector."""

    exit_code = 4


class UnsupportedReprError(HDCError, TypeError):
    exit_code = 2


class NumericInputError(HDCError, ValueError):
    exit_code = 4


class NumericOverflowError(HDCError, FloatingPointError):
    def __init__(self, message: str, index=None):
        super().__init__(message if index is None else f"{message} (at index {index})")
        self.index = index

    exit_code = 4


class DivergenceError(HDCError, RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"optimization diverged at step {step}: objective={value!r}")
        self.step = step
        self.value = value

    exit_code = 4


class InvalidParameterError(HDCError, ValueError):
    exit_code = 2


class InvalidEnsembleError(InvalidParameterError):
    pass


class InvalidStateError(HDCError, RuntimeError):
    exit_code = 2


class ConfigError(HDCError, ValueError):
    """Bad experiment configuration; the message names the offending field."""

    exit_code = 2

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DataError(HDCError):
    exit_code = 3


class DatasetFormatError(DataError, ValueError):
    def __init__(self, message: str, line=None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


class InvalidDatasetError(DataError, ValueError):
    pass


class ComparisonError(HDCError, ValueError):
    exit_code = 2


class SchemaError(ComparisonError):
    def __init__(self, key: str, source: str = "report"):
        super().__init__(f"{source} is missing required key {key!r}")
        self.key = key
