"""Exception types shared across the toolkit."""


class PlatoonMssError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(PlatoonMssError, ValueError):
    """A numeric argument is outside its admissible range."""


class RealizationError(PlatoonMssError):
    """A transfer function cannot be realized as requested (e.g. improper)."""


class WellPosednessError(PlatoonMssError):
    """A feedback interconnection contains a delay-free algebraic loop."""


class EvaluationError(PlatoonMssError):
    """Pointwise evaluation requested at (or too close to) a system pole."""


class UnstableSystemError(PlatoonMssError):
    """An operation requires a stable system and the input is not."""


class InvalidModelError(PlatoonMssError, ValueError):
    """A channel model violates its normalization or support constraints."""


class UnsupportedModelError(PlatoonMssError):
    """The requested analysis path does not apply to this channel model."""


class GuardError(PlatoonMssError):
    """A memory or enumeration guard refused the requested problem size."""


class SchemaError(PlatoonMssError, ValueError):
    """An experiment configuration failed schema validation."""
