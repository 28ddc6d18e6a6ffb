"""Exception hierarchy shared across the toolkit.

Each class carries the process exit code the CLI maps it to.
"""


class WfsmError(Exception):
    exit_code = 1


class ConfigError(WfsmError):
    exit_code = 2


class ValidationError(WfsmError, ValueError):
    """A data object violates one of its declared invariants.

    ``invariant`` names the violated rule so that callers (and the CLI)
    can report it without parsing the message.
    """

    exit_code = 3

    def __init__(self, invariant, message=None):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message or invariant}")


class DomainError(WfsmError, ValueError):
    exit_code = 3


class GeometryError(ValidationError):
    pass


class SolverDivergence(WfsmError, RuntimeError):
    exit_code = 4

    def __init__(self, message, residual=None, point=None):
        self.residual = residual
        self.point = point
        super().__init__(message)


class InfeasibleError(WfsmError):
    exit_code = 5

    def __init__(self, message, max_torque=None):
        self.max_torque = max_torque
        super().__init__(message)


class RangeError(WfsmError, ValueError):
    exit_code = 3


class CycleError(WfsmError):
    exit_code = 6
