"""Exception types shared across the package.

Every failure the library raises deliberately derives from TailAdaptError so
callers (and the CLI) can catch one base class. Some types also inherit the
matching builtin so generic handlers keep working.
"""


class TailAdaptError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TailAdaptError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(TailAdaptError, RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class DegenerateEmbeddingError(TailAdaptError, ValueError):
    """A row fed to l2 normalization has norm below the supported floor."""


class InvalidTemperatureError(TailAdaptError, ValueError):
    """Temperature must be strictly positive."""


class ClassIndexError(TailAdaptError, IndexError):
    """A class or template id falls outside the embedding table."""


class FrozenParameterError(TailAdaptError, RuntimeError):
    """An optimizer update was attempted through a frozen view."""


class FreezeViolationError(TailAdaptError, RuntimeError):
    """Frozen parameters changed while they were supposed to stay fixed."""


class InvalidRatioError(TailAdaptError, ValueError):
    """Imbalance ratio must be >= 1."""


class InvalidPowerError(TailAdaptError, ValueError):
    """Power-law exponent must be strictly positive."""


class ConfigurationError(TailAdaptError, ValueError):
    """A config value, key, strategy, or placement is not supported."""


class DatasetFormatError(TailAdaptError, ValueError):
    """A dataset file is malformed; the message names the offending spot."""


class CheckpointFormatError(TailAdaptError, ValueError):
    """A checkpoint file is malformed; the message names the offending spot."""


class DivergenceError(TailAdaptError, RuntimeError):
    """Training loss became non-finite or unreasonably large."""
