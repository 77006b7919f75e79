"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid or unsupported waveform / experiment configuration."""


class DesignMismatchError(ValueError):
    """A cancellation design was applied to a burst it was not built for."""


class NumericalError(RuntimeError):
    """A solve failed and no fallback was permitted."""
