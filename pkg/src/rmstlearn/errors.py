"""Semantic exception hierarchy.

Every error carries a stable machine-readable code (the class name) and an
exit status used by the CLI: 2 validation, 3 data, 4 numeric.
"""


class RmstLearnError(Exception):
    """Base class for all package errors."""

    exit_code = 2

    @property
    def code(self) -> str:
        return type(self).__name__


# --- validation errors (exit 2) ---

class SchemaError(RmstLearnError):
    """Run configuration failed validation."""


class BadFoldCount(RmstLearnError):
    """Fold count outside the allowed range for the requested procedure."""


class DimensionMismatch(RmstLearnError):
    """Covariate dimension disagrees between inputs."""


class ClampRequired(RmstLearnError):
    """Theory audit invoked without the boundedness clamp enabled."""


# --- data errors (exit 3) ---

class DataError(RmstLearnError):
    exit_code = 3


class EmptyData(DataError):
    """Operation requires a nonempty dataset."""


class AllCensored(DataError):
    """Product-limit estimation requires at least one observed event."""


class TauOutOfRange(DataError):
    """Horizon must be positive and within the observed time range."""


class DegenerateJackknife(DataError):
    """A leave-one-out subsample has no events, so the pseudo-value is undefined."""


class DegenerateKMFold(DataError):
    """A Kaplan-Meier fold contains no events; the rotation cannot proceed."""


class ParseError(DataError):
    """Malformed CSV input."""


# --- numeric errors (exit 4) ---

class NumericError(RmstLearnError):
    exit_code = 4


class NonFinite(NumericError):
    """Non-finite values where finite numbers are required."""


class SingularDesign(NumericError):
    """Rank-deficient design with the minimum-norm fallback disabled."""


class ZeroCensorWeight(NumericError):
    """Censoring survival hit zero at a point where a weight is needed."""
