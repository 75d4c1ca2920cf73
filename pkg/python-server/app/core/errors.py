"""Error types shared across the control stack."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class DomainError(ValueError):
    """A numeric input lies outside the operation's domain."""


class ParseError(ValueError):
    """Advisor text could not be parsed into advice or a phase."""


class ProtocolError(ValueError):
    """A bridge frame is malformed or inconsistent."""


class IntegrationError(RuntimeError):
    """The simulated plant produced a non-finite state."""


class AdvisorUnavailable(RuntimeError):
    """The remote advisor could not produce a response."""


class PolicyError(RuntimeError):
    """The policy could not produce an action chunk."""


class DatalogError(OSError):
    """Episode records could not be written or read."""


class MetricsError(ValueError):
    """Results cannot be aggregated or compared."""


class ScenarioNotFound(KeyError):
    """No scenario with the requested identifier exists."""
