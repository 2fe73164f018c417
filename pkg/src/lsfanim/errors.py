"""Exception taxonomy shared by all subsystems.

The CLI maps these onto its exit-code contract: ConfigError and InputError
are usage/data problems (exit 2), IntegrityError covers file and checkpoint
corruption (exit 3), and NonFiniteError flags numerical failure (exit 4).
"""


class LsfError(Exception):
    """Base class for all package errors."""


class ShapeError(LsfError):
    """Tensor or array dimensions incompatible with the requested operation."""


class ConfigError(LsfError):
    """Invalid configuration value, unknown key, or inconsistent hyperparameters."""


class InputError(LsfError):
    """Caller-supplied data violates a precondition (non-finite, empty, out of range)."""


class StateError(LsfError):
    """Object used before required state was established (missing params, grads)."""


class IntegrityError(LsfError):
    """Persisted file is corrupt, truncated, or inconsistent with its manifest."""


class NonFiniteError(LsfError):
    """A NaN or Inf appeared where only finite values are allowed."""
