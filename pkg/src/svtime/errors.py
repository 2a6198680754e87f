class SVTimeError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(SVTimeError, ValueError):
    exit_code = 2


class DataError(SVTimeError, ValueError):
    exit_code = 3


class NumericError(SVTimeError, ArithmeticError):
    exit_code = 4


class CheckpointError(SVTimeError, ValueError):
    exit_code = 3
