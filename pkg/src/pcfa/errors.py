"""Exception types shared across the package."""


class PCError(Exception):
    """Base class for all pcfa errors."""


class ParseError(PCError):
    """Raised on malformed circuit files; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(PCError):
    """Invalid variable catalog (duplicate labels, bad decision variable, ...)."""


class StructureError(PCError):
    """Circuit violates a structural precondition of the requested operation."""


class IncompatibleStructure(StructureError):
    """The two decision-conditioned subcircuits cannot be scope-paired."""


class ZeroEvidence(PCError):
    """Conditional query on evidence with zero probability mass."""


class InfeasibleRepair(PCError):
    """No distribution in the repair family satisfies the fairness constraint."""


class EnumerationCapExceeded(PCError):
    """A metric required enumerating more states than the configured cap."""

    def __init__(self, what, needed, cap):
        self.needed = needed
        self.cap = cap
        super().__init__(f"{what} requires {needed} states, cap is {cap}")


class IncompleteInput(PCError):
    """A summary over the full pattern set was requested from a partial set."""


class DatasetError(PCError):
    """CSV or schema-config problem while loading training data."""
