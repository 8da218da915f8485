"""Exception types shared across the package."""


class TraceParseError(ValueError):
    """A trace file row could not be parsed. Message names the line number."""


class ValidationError(ValueError):
    """Well-formed input with invalid content (ordering, ranges, references)."""


class ConfigurationError(RuntimeError):
    """A session or experiment configuration that cannot be run."""


class InsufficientHistoryError(ValueError):
    """Not enough samples to compute the requested statistic."""
