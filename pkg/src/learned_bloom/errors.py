"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class BudgetError(ValueError):
    """A false-positive-rate budget violates one of its feasibility bounds."""


class TrainingError(ArithmeticError):
    """A trainer produced a non-finite loss or parameter."""


class CorruptBlobError(ValueError):
    """A serialized filter or model failed magic, version or length checks."""


class DataError(ValueError):
    """Corpus input could not be parsed."""
