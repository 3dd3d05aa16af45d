"""Exception hierarchy shared by every module.

The CLI maps ``InputError`` subclasses to exit code 2 and ``NumericalError``
subclasses to exit code 3, using ``code`` as the machine-readable tag.
"""


class DppError(Exception):
    code = "error"


class InputError(DppError, ValueError):
    code = "invalid_input"


class InvalidModelError(InputError):
    code = "invalid_model"


class MapParseError(InputError):
    code = "invalid_map"

    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class ConfigError(InputError):
    code = "invalid_config"


class EmptyInterventionSetError(InputError):
    code = "empty_intervention_set"


class NumericalError(DppError, ArithmeticError):
    code = "numerical_failure"


class ConvergenceError(NumericalError):
    code = "non_convergence"

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ObserverError(NumericalError):
    code = "belief_not_normalizable"


class InfeasibleLpError(NumericalError):
    code = "infeasible_lp"


class UnboundedLpError(NumericalError):
    code = "unbounded_lp"
