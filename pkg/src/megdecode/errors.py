"""Shared exception types."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class InvalidSignalError(ContractError):
    """Window data contains non-finite values or has an invalid shape."""


class FilterDesignError(ContractError):
    """Requested filter cannot be realized (e.g. band edges at/past Nyquist)."""


class GraphError(ContractError):
    """Backward was requested on a tensor without a recorded computation."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. AUROC with one class)."""


class UndefinedTestError(ValueError):
    """Statistical test is undefined (e.g. all paired differences are zero)."""


class TrainingDivergedError(RuntimeError):
    """Non-finite loss or gradient encountered; carries diagnostics."""
