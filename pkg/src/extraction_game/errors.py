"""Exception hierarchy shared by all modules."""


class ExtractionGameError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ExtractionGameError):
    """Malformed configuration document."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(ExtractionGameError, ValueError):
    """One or more model invariants are violated.

    ``issues`` holds the offending :class:`ValidationIssue` records.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        text = "; ".join(f"{i.field}: {i.message}" for i in self.issues)
        super().__init__(text or "invalid configuration")

    @property
    def fields(self):
        return [i.field for i in self.issues]


class DegenerateTax(ExtractionGameError, ValueError):
    """A tax rate of 1 or more wipes out the company's share."""


class NoRealRoot(ExtractionGameError):
    """The coefficient system for the company has no real solution."""


class NoEquilibrium(ExtractionGameError):
    """No tax assignment yields a self-consistent admissible equilibrium."""


class SingularSystem(ExtractionGameError, ArithmeticError):
    """Linear system is numerically singular."""


class UnstableSystem(ExtractionGameError, ArithmeticError):
    """Spectral abscissa is non-negative; discounted integrals diverge."""


class QuadratureFailure(ExtractionGameError, ArithmeticError):
    """Adaptive quadrature could not reach the requested tolerance."""
