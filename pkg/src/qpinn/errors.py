"""Exception types shared across the package."""


class QpinnError(Exception):
    """Base class for all package errors."""


class InvalidBatchError(QpinnError):
    """Batched inputs have mismatched lengths or non-finite entries."""


class CapacityError(QpinnError):
    """Requested register size is outside the supported range."""


class InvalidGateError(QpinnError):
    """Gate definition is inconsistent (wire collision, bad slot count)."""


class DomainError(QpinnError):
    """Input lies outside the mathematical domain of an operation."""


class ConfigError(QpinnError):
    """Configuration file or runtime configuration is invalid."""


class MetricError(QpinnError):
    """A metric is undefined for the given data (e.g. zero-norm reference)."""


class ContractViolation(QpinnError):
    """An API precondition was violated (e.g. non-scalar loss node)."""


class RunAborted(QpinnError):
    """Training aborted on non-finite loss or gradients."""
