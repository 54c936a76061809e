"""Exception taxonomy shared across the package.

CLI exit codes map onto these: configuration errors exit 2, numeric
failures exit 3, verification failures exit 4.
"""


class ConfigurationError(Exception):
    """Invalid configuration: bad shapes, unsupported options, stability bounds."""


class NumericError(Exception):
    """Non-finite value produced where finiteness is a contract."""


class VerificationError(Exception):
    """A recorded hash or invariant no longer holds."""


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Unsupported format_version."""


class CheckpointFormatError(CheckpointError):
    """Malformed or incomplete checkpoint file."""


class CheckpointShapeError(CheckpointError):
    """Weights inconsistent with the declared layer dimensions."""
