"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class ConfigError(ValueError):
    """A configuration document is malformed or inconsistent."""


class NumericError(RuntimeError):
    """A forward/backward pass or update produced NaN/Inf values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FormatError(ValueError):
    """A binary artifact could not be parsed. Carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class EpisodeFormatError(FormatError):
    pass


class CheckpointFormatError(FormatError):
    pass
