"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class MtjGxnorError(Exception):
    exit_code = 1


class ParameterError(MtjGxnorError, ValueError):
    """A physical or algorithmic parameter is outside its valid domain."""

    exit_code = 2


class RegimeError(ParameterError):
    """Current is not above the critical current (analytic model invalid)."""

    exit_code = 2


class DivergenceError(ParameterError):
    """Switching time diverges (initial angle exactly zero)."""

    exit_code = 2


class ShapeError(MtjGxnorError, ValueError):
    exit_code = 3


class IntegrationError(MtjGxnorError, RuntimeError):
    """Non-finite state during LLG integration."""

    def __init__(self, step: int, message: str = "non-finite magnetization"):
        super().__init__(f"{message} at step {step}")
        self.step = step

    exit_code = 4


class EmptyResultError(MtjGxnorError, ValueError):
    exit_code = 5


class DatasetError(MtjGxnorError):
    exit_code = 6


class BadMagicError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    def __init__(self, path, expected: int, actual: int):
        super().__init__(
            f"{path}: truncated, expected {expected} bytes, found {actual}")
        self.expected = expected
        self.actual = actual


class CountMismatchError(DatasetError):
    pass


class ConfigError(MtjGxnorError):
    """Unreadable or invalid configuration file.

    ``line`` and ``field`` are filled in when known.
    """

    exit_code = 7

    def __init__(self, message: str, *, path=None, line=None, field=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ": ".join([", ".join(where)]) + ": " if where else ""
        super().__init__(prefix + message)
        self.path = path
        self.line = line
        self.field = field


class TrainingDivergedError(MtjGxnorError, RuntimeError):
    exit_code = 8

    def __init__(self, epoch: int):
        super().__init__(f"loss became NaN during epoch {epoch}")
        self.epoch = epoch
