"""Exception hierarchy shared by all toolkit modules.

The CLI maps these onto its exit-code contract: ``ValidationError`` (and
subclasses) exit 1, ``IOFormatError`` and plain ``OSError`` exit 2.
"""


class RepsimError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(RepsimError):
    """Invalid arguments, violated invariants, or misaligned inputs."""


class AlignmentError(ValidationError):
    """Cross-variant sample or dimension alignment failure."""


class DegenerateInputError(ValidationError):
    """Input carries no usable signal (all-constant features, zero rank)."""


class IOFormatError(RepsimError):
    """Missing, unreadable, or malformed on-disk artifacts."""
