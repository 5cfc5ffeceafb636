"""Shared exception types.

Every failure a caller can act on gets a distinct class; the CLI maps any
of these to a message on stderr and a nonzero exit.
"""


class FoveaError(Exception):
    """Base class for all package errors."""


class ConfigError(FoveaError):
    """A parameter or config field has an invalid or inconsistent value."""


class BoundaryError(FoveaError):
    """A frame stack would reach outside the available frame range."""


class EmptyDatasetError(FoveaError):
    """Dataset construction produced no training pairs."""


class TrainingDivergedError(FoveaError):
    """Loss became non-finite; carries step and last finite loss."""

    def __init__(self, step: int, lr: float, last_loss: float):
        self.step = step
        self.lr = lr
        self.last_loss = last_loss
        super().__init__(
            f"non-finite loss at step {step} (lr={lr:g}, last finite loss={last_loss:g})"
        )


class FormatError(FoveaError):
    """A file being read does not match its declared format."""
