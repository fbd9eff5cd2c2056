"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI uses when it escapes.
"""


class HaloBellError(Exception):
    exit_code = 1


class ConfigError(HaloBellError, ValueError):
    exit_code = 3


class DataError(HaloBellError, ValueError):
    exit_code = 4


class NumericalError(HaloBellError, ArithmeticError):
    exit_code = 5


class SearchError(HaloBellError, RuntimeError):
    exit_code = 6

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class DomainError(NumericalError, ValueError):
    """Parameter outside the mathematical domain of a model."""


class DegenerateStateError(DomainError):
    pass


class IntegrationError(NumericalError):
    pass


class FitError(NumericalError):
    pass
