"""Exception types shared across the library."""


class DriftlearnError(Exception):
    """Base class for library errors."""


class DimensionError(DriftlearnError):
    """Array shapes do not line up for the requested operation."""


class DomainError(DriftlearnError):
    """A numeric argument is outside its valid domain."""


class ConfigError(DriftlearnError):
    """Invalid or inconsistent configuration."""


class InputError(DriftlearnError):
    """A required input (e.g. a modality) is missing or malformed."""


class StructuralError(DriftlearnError):
    """A structural edit would violate a network invariant."""


class TrainingError(DriftlearnError):
    """Training produced a non-finite value.

    Carries the index of the offending layer when known.
    """

    def __init__(self, message: str, layer_index: int | None = None):
        super().__init__(message)
        self.layer_index = layer_index


class ParseError(DriftlearnError):
    """A data file could not be parsed; carries row/column context."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(DriftlearnError):
    """Parsed data violates the expected schema (e.g. unknown label)."""
