"""Exception hierarchy shared by every module."""


class IncstabError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(IncstabError, ValueError):
    """An argument violates a documented precondition."""


class ExprSyntaxError(IncstabError, ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset, source=""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class EvalDomainError(IncstabError, ArithmeticError):
    """Evaluation left the domain of an operation (log of negative, x/0, overflow).

    ``expr`` is the offending subexpression.
    """

    def __init__(self, reason, expr=None):
        self.reason = reason
        self.expr = expr
        where = f" in '{expr}'" if expr is not None else ""
        super().__init__(f"{reason}{where}")


class ConfigError(IncstabError, ValueError):
    """Invalid configuration document. ``location`` is a path like ``systems[0].manifold``."""

    def __init__(self, message, location=""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class SchemaError(ConfigError):
    pass


class TopologyError(ConfigError):
    pass


class UnknownVariableError(ConfigError):
    pass


class SimulationAbort(IncstabError, RuntimeError):
    """Numerical abort during integration; ``t_last`` is the last good time."""

    def __init__(self, message, t_last):
        self.t_last = t_last
        super().__init__(f"{message} (last good t={t_last!r})")


class BlowUpError(SimulationAbort):
    pass


class SlidingModeError(SimulationAbort):
    pass
