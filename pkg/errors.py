class UASimError(Exception):
    """Base class for simulator errors. `exit_code` is what the CLI returns."""
    exit_code = 1


class UsageError(UASimError):
    """Invalid command-line or config-file input"""
    exit_code = 1


class FockSizeLimitError(UASimError):
    """Requested Fock evolution exceeds the desk-scale limits"""
    exit_code = 1


class OracleCheckError(UASimError):
    """A cross-formalism comparison breached its tolerance"""
    exit_code = 2

    def __init__(self, message: str, deviations: dict):
        super().__init__(message)
        self.deviations = deviations


# Not ValueError subclasses: pydantic would re-wrap them into ValidationError
# inside model validators and the exit code would be lost.
class UnphysicalStateError(UASimError):
    """Covariance matrix violates the uncertainty relation"""
    exit_code = 3


class NumericalConditioningError(UASimError):
    """Matrix too close to singular for a physical state"""
    exit_code = 3
