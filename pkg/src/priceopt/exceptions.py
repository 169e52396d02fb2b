"""Exception types raised across the package."""


class PriceOptError(Exception):
    """Base class for every error raised by priceopt."""


class PortfolioParseError(PriceOptError, ValueError):
    """A portfolio file could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ValidationError(PriceOptError, ValueError):
    """A domain invariant does not hold."""

    def __init__(self, message, field=None, customer_id=None):
        self.field = field
        self.customer_id = customer_id
        parts = []
        if customer_id is not None:
            parts.append(f"customer {customer_id}")
        if field is not None:
            parts.append(f"field '{field}'")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DomainError(PriceOptError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedModelError(PriceOptError, TypeError):
    """The conversion model cannot be used with the requested operation."""


class CombinationCapError(PriceOptError, ValueError):
    """An exhaustive search would enumerate more combinations than allowed."""

    def __init__(self, required, cap):
        self.required = required
        self.cap = cap
        super().__init__(
            f"exhaustive search needs {required} combinations but the cap is {cap}; "
            f"raise max_combinations to at least {required}"
        )


class ConfigError(PriceOptError, ValueError):
    """A scenario configuration is invalid."""
