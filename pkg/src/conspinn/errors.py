"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class UnsupportedRequestError(ValueError):
    """A derivative request the jet engine does not implement."""


class ContractViolation(ValueError):
    """A caller broke a precondition (wrong mode, missing jet entries, ...)."""


class NonFiniteError(FloatingPointError):
    """A loss, gradient or parameter became NaN/Inf.

    ``location`` carries the offending collocation point when one is known.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown keys, bad values, stability)."""
