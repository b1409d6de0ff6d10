"""Exception types shared across the package."""


class PanelMxlError(Exception):
    """Base class for all panelmxl errors."""


class SchemaError(PanelMxlError):
    """A required column or field is missing from an input file."""


class DataParseError(PanelMxlError):
    """A cell in an input file could not be parsed."""


class IntegrityError(PanelMxlError):
    """Input data violate a structural invariant (duplicates, bad chosen flag, ...)."""


class SpecSyntaxError(PanelMxlError):
    """A model spec document failed to parse.

    `errors` holds (line_number, message) pairs; line 0 marks document-level
    problems such as a missing price declaration.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors)
        super().__init__(f"invalid model spec: {lines}")


class ConfigurationError(PanelMxlError):
    """Invalid draw plan, optimizer settings, or other configuration."""


class DomainError(PanelMxlError):
    """An argument lies outside the mathematical domain of an operation."""


class EvaluationError(PanelMxlError):
    """Utility or likelihood evaluation failed (unbound attribute, overflow,
    or a chosen-alternative probability below the representable floor)."""


class EstimationError(PanelMxlError):
    """Estimation could not start or produced an unusable covariance."""


class IdentificationError(PanelMxlError):
    """A requested quantity is not identified under the given specification."""
