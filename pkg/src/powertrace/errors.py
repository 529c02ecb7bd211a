"""Exception hierarchy shared across the toolkit."""


class PowertraceError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PowertraceError, ValueError):
    """Bad user input: unknown metric, out-of-range interval, malformed flag."""


class SourceUnavailable(PowertraceError):
    """A metric source could not be opened on this host.

    ``reason`` carries the probe result (missing binary, permission denied, ...).
    """

    def __init__(self, kind: str, reason: str):
        super().__init__(f"{kind} source unavailable: {reason}")
        self.kind = kind
        self.reason = reason


class SourceError(PowertraceError):
    """An open source failed as a whole (device disappeared, handle closed)."""


class ConfigurationError(PowertraceError):
    """Inconsistent runtime configuration, e.g. two sources claiming one metric."""


class StartError(PowertraceError):
    """A measurement session could not be started."""


class AlreadyStopped(PowertraceError):
    """``stop`` was called on a session that has already been stopped."""


class FormatError(PowertraceError):
    """A persisted session does not match the expected on-disk layout."""


class IntensityError(PowertraceError):
    """Carbon-intensity lookup failed. Always soft: callers degrade, never abort."""


class ProviderError(IntensityError):
    """The intensity provider answered with a non-2xx status or was unreachable."""


class ParseError(IntensityError):
    """The intensity provider's response body could not be interpreted."""


class AnalysisUnavailable(PowertraceError):
    """An analysis needs metrics that the session does not contain."""
