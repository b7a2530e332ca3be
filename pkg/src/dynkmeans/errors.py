"""Shared exception types."""


class UsageError(ValueError):
    """Caller violated a precondition (bad id, empty set, out-of-range arg)."""


class NoColorError(RuntimeError):
    """Every color of a consistent hash overflowed its bucket cap.

    Signals that the sampled hash family missed its success event; the owner
    resamples with a fresh seed and logs the event.
    """


class NoMassError(RuntimeError):
    """A sample was requested but every live point coincides with a center."""
