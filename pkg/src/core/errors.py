"""
Exception hierarchy shared by the tensor kernel, the solvers, the cube readers and the CLI.
"""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class TensorBenchError(Exception):
    """Base class for every error raised by this package."""
    exit_code = EXIT_USAGE


class InvalidModeError(TensorBenchError, ValueError):
    pass


class InvalidIndexError(TensorBenchError, IndexError):
    pass


class DimensionError(TensorBenchError, ValueError):
    pass


class ModelError(TensorBenchError, ValueError):
    pass


class UndefinedReferenceError(TensorBenchError, ValueError):
    """Relative quantities requested against a reference with zero norm."""
    pass


class ConfigurationError(TensorBenchError, ValueError):
    pass


class UnsupportedOrderError(TensorBenchError, ValueError):
    pass


class NumericalFailureError(TensorBenchError, ArithmeticError):
    """
    Raised when a solver produces non-finite values.
    Args:
        last_iterate: the last model whose entries were all finite (may be None)
        trace: the DecompositionTrace accumulated up to the failure
    """
    exit_code = EXIT_NUMERICAL

    def __init__(self, message, last_iterate=None, trace=None):
        super(NumericalFailureError, self).__init__(message)
        self.last_iterate = last_iterate
        self.trace = trace


class CubeFormatError(TensorBenchError, ValueError):
    exit_code = EXIT_IO


class SizeMismatchError(CubeFormatError):
    pass


class CubeIOError(TensorBenchError, OSError):
    exit_code = EXIT_IO


def exit_code_for(exc):
    """Map an exception to the CLI exit code."""
    if isinstance(exc, TensorBenchError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_USAGE
