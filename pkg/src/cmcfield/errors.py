"""Exception hierarchy. Each top-level class carries the CLI exit code it maps to."""


class CmcFieldError(Exception):
    exit_code = 1


class ConfigError(CmcFieldError, ValueError):
    """Invalid argument, parameter or configuration."""

    exit_code = 2


class InvalidParameterError(ConfigError):
    pass


class OutOfDomainError(ConfigError):
    def __init__(self, point):
        self.point = tuple(float(v) for v in point)
        super().__init__(f"point {self.point} lies outside the domain")


class UnsupportedDomainError(ConfigError):
    pass


class InvalidBeliefError(ConfigError):
    """Covariance that is not symmetric positive definite."""


class NumericalError(CmcFieldError, ArithmeticError):
    exit_code = 3


class SingularityError(NumericalError):
    def __init__(self, freq_hz):
        self.freq_hz = float(freq_hz)
        super().__init__(f"(i2*pi*f I - J) is singular at f = {self.freq_hz:g} Hz")


class ForwardModelError(NumericalError):
    """Forward-model failure tagged with its channel and/or window timestamp."""

    def __init__(self, message, channel=None, t=None):
        self.channel = channel
        self.t = t
        tags = []
        if channel is not None:
            tags.append(f"channel {channel}")
        if t is not None:
            tags.append(f"window t={t:g}")
        prefix = f"[{', '.join(tags)}] " if tags else ""
        super().__init__(prefix + str(message))


class OracleFailure(NumericalError):
    pass


class FormatMismatchError(CmcFieldError):
    exit_code = 4
