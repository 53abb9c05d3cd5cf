"""Error types raised across the package.

Four kinds keep failure surfaces distinguishable: contract errors for API
misuse, configuration errors for bad settings, data errors for unusable
inputs, and training errors for numerical failures mid-run.
"""


class ContractError(ValueError):
    """An argument violates a function's documented precondition."""


class ConfigurationError(ValueError):
    """A configuration value is out of range or inconsistent."""


class DataError(ValueError):
    """Input data cannot be used (bad manifest row, degenerate image, ...)."""


class TrainingError(RuntimeError):
    """Training produced a non-finite quantity; message carries the step."""
