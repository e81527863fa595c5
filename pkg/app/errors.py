"""Exception hierarchy and the CLI exit codes they map to."""

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4
EXIT_INTERRUPTED = 130


class CnnGaError(Exception):
    """Base class for every error raised by the toolkit."""
    exit_code = EXIT_CHECK_FAILED


class InvalidArgumentError(CnnGaError, ValueError):
    exit_code = EXIT_USAGE


class InvalidGenomeError(CnnGaError, ValueError):
    exit_code = EXIT_USAGE


class ConfigError(CnnGaError, ValueError):
    exit_code = EXIT_USAGE


class ContractError(CnnGaError, RuntimeError):
    """A caller broke an operation's precondition (e.g. unevaluated individual)."""


class ShapeError(CnnGaError, ValueError):
    pass


class NumericError(CnnGaError, ArithmeticError):
    pass


class InvalidDataError(CnnGaError, ValueError):
    exit_code = EXIT_DATA


class CheckpointError(CnnGaError):
    exit_code = EXIT_CHECKPOINT


class GradientCheckError(CnnGaError):
    exit_code = EXIT_CHECK_FAILED


class EvaluationError(CnnGaError):
    """An evaluator failed on a specific genome."""

    def __init__(self, genome_key: str, cause: BaseException):
        super().__init__(f"evaluation of genome {genome_key} failed: {cause}")
        self.genome_key = genome_key
        self.cause = cause
        if isinstance(cause, CnnGaError):
            self.exit_code = cause.exit_code
