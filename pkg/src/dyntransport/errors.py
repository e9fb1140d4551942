"""Exception hierarchy shared by every module of the package."""


class TransportError(Exception):
    """Base class for all errors raised by dyntransport."""


class ConfigurationError(TransportError):
    """Objects that must share a space, grid or graph do not."""


class ValidationError(TransportError):
    """An input violates a structural invariant (normalization, conservation, ...)."""


class EvaluationError(TransportError):
    """A user supplied function returned NaN, -inf or an otherwise unusable value."""


class InfeasibilityError(TransportError):
    """The optimization problem has no feasible point."""


class ContractError(TransportError):
    """An operation was called without the hypothesis that makes its guarantee hold."""


class CertificateError(TransportError):
    """A field or map is not representable on the graph.

    ``offenders`` lists the offending ``(step, node)`` pairs.
    """

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class ParseError(TransportError):
    """An input file is not valid JSON or does not follow the expected layout."""
