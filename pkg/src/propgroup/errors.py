"""Exception hierarchy. CLI exit codes are keyed off the three base classes."""


class PropGroupError(Exception):
    pass


class InputError(PropGroupError, ValueError):
    """Bad or inconsistent input data (CLI exit code 2)."""


class ConfigError(PropGroupError, ValueError):
    """Configuration or checkpoint version problems (CLI exit code 3)."""


class NumericalError(PropGroupError, ArithmeticError):
    """Non-finite values during training (CLI exit code 4)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MalformedEncodingError(InputError):
    pass


class InvariantError(PropGroupError, AssertionError):
    pass


class DimensionError(InputError):
    pass


class InvalidMatchingError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class PlacementError(InputError):
    pass


class DatasetLayoutError(InputError):
    pass


class AlignmentError(InputError):
    pass


class InvalidProposalError(InputError):
    pass


class TrainingDataError(InputError):
    pass


class ConfigurationError(ConfigError):
    pass


class VersionError(ConfigError):
    pass
