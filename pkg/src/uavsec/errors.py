"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Scenario configuration is malformed or violates an invariant."""


class DomainError(ValueError):
    """An operation was called outside its mathematical domain."""


class NumericError(ArithmeticError):
    """A metric became NaN or infinite during a run."""
