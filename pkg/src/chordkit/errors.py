"""Exception types shared across the toolkit."""
from __future__ import annotations


class ChordError(Exception):
    """Base class for all chordkit errors."""


class ConfigError(ChordError):
    """Raised for malformed or unknown configuration input."""


class MissingChannelError(ChordError):
    """Raised when a required texture channel is absent on disk."""


class ChainStepError(ChordError):
    """Raised when a chain stage fails; carries the step identity.

    Parameters
    ----------
    step : str
        Name of the chain step that failed (e.g. "normal_predictor").
    message : str
        Human-readable failure description.
    """

    def __init__(self, step: str, message: str):
        self.step = step
        super().__init__(f"chain step '{step}' failed: {message}")
