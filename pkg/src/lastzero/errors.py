"""Error taxonomy shared across the package."""


class LastZeroError(Exception):
    """Base class for package-specific failures."""


class DomainError(LastZeroError, ValueError):
    """Arguments outside the mathematical domain of an operation."""


class UnsupportedModelError(LastZeroError):
    """Operation not available for this catalog entry (e.g. tilt leaves the catalog)."""


class NumericError(LastZeroError, ArithmeticError):
    """A numerical scheme failed to converge.  Carries diagnostics."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        base = super().__str__()
        if self.diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in sorted(self.diagnostics.items()))
            return f"{base} [{detail}]"
        return base


class ResourceError(LastZeroError):
    """A budget (path count, step count, node count) was exceeded."""
