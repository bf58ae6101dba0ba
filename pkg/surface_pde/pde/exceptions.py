EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_UNDERFLOW = 4
EXIT_NON_FINITE = 5
EXIT_DEGENERATE_REFINEMENT = 6


class PdeError(Exception):
    """Base class for every failure the toolkit reports to its callers.

    ``details`` is a JSON-serializable dict; together with the message it forms
    the error record written by the management commands.
    """

    exit_code = EXIT_VALIDATION

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def as_record(self):
        return {"error": self.message, "details": self.details}


class MeshFormatError(PdeError):
    exit_code = EXIT_VALIDATION


class MeshValidationError(PdeError):
    exit_code = EXIT_VALIDATION


class ConfigError(PdeError):
    exit_code = EXIT_VALIDATION


class SolverError(PdeError):
    exit_code = EXIT_SOLVER


class NumericalUnderflow(PdeError):
    exit_code = EXIT_UNDERFLOW


class NonFiniteFieldError(PdeError):
    exit_code = EXIT_NON_FINITE

    def __init__(self, message, step, details=None):
        details = dict(details or {})
        details.setdefault("step", step)
        super().__init__(message, details)
        self.step = step


class DegenerateRefinementError(PdeError, ZeroDivisionError):
    exit_code = EXIT_DEGENERATE_REFINEMENT
