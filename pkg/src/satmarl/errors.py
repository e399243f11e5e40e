"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, constellation or training configuration."""


class ContractError(RuntimeError):
    """A caller broke an API precondition (e.g. acting for an inactive agent)."""


class NumericError(ArithmeticError):
    """Non-finite values appeared in a forward pass or loss."""
