class DomainError(ValueError):
    """An argument lies outside the region where an operation is defined."""


class FeasibilityError(RuntimeError):
    """A constrained sampler could not find any admissible configuration."""


class LowAcceptanceError(RuntimeError):
    """Rejection sampling is hopeless for these parameters; use the chain."""
