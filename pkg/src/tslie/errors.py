"""Exception hierarchy.

Input problems derive from ``InputError`` (CLI exit code 2); numeric
failures from ``NumericError`` (exit code 3).
"""


class ToolkitError(Exception):
    pass


class InputError(ToolkitError, ValueError):
    pass


class ExprSyntaxError(InputError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name, position=None, allowed=()):
        self.name = name
        msg = f"unknown identifier {name!r}"
        if allowed:
            msg += f"; allowed variables: {', '.join(sorted(allowed))}"
        super().__init__(msg, position)


class ProblemFormatError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainExhaustedError(InputError):
    """Too few defined points left for the requested operation."""


class NumericError(ToolkitError, ArithmeticError):
    pass


class EvaluationError(NumericError):
    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message)


class ConvergenceError(NumericError):
    pass


class SingularError(NumericError):
    pass
