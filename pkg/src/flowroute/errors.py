"""Exception hierarchy. Each class carries the CLI exit code and error kind it maps to."""


class FlowRouteError(Exception):
    kind = "error"
    exit_code = 1


class InputValidationError(FlowRouteError, ValueError):
    kind = "input"
    exit_code = 2


class DimensionError(InputValidationError):
    kind = "dimension"


class EmptyGraphError(InputValidationError):
    kind = "empty-graph"


class DomainError(InputValidationError):
    kind = "domain"


class DegenerateDemandError(InputValidationError):
    kind = "degenerate-demand"


class ConfigError(InputValidationError):
    kind = "config"


class UsageError(FlowRouteError, RuntimeError):
    kind = "usage"
    exit_code = 2


class NumericalError(FlowRouteError, ArithmeticError):
    kind = "numerical"
    exit_code = 4


class DisconnectedGraphError(NumericalError):
    """Effective resistance is infinite across components."""

    kind = "disconnected"


class GenerationError(FlowRouteError, RuntimeError):
    kind = "generation"
    exit_code = 4
