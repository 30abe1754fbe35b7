"""Exception hierarchy shared across the package.

CLI exit-code mapping lives in ``spikebridge.cli``; library code raises these
and never calls ``sys.exit``.
"""


class SpikeBridgeError(Exception):
    """Base class for all errors raised by spikebridge."""


class DimensionError(SpikeBridgeError):
    """Incompatible array shapes (matmul inner dims, kernel vs input, ...)."""


class ContractError(SpikeBridgeError):
    """A documented precondition was violated (non-scalar loss, non-binary spikes, ...)."""


class ConfigurationError(SpikeBridgeError):
    """Invalid or inconsistent configuration (interval not dividing T, missing profile fields, ...)."""


class NumericError(SpikeBridgeError):
    """Non-finite values where finite ones are required; carries layer/timestep context."""

    def __init__(self, message, layer=None, timestep=None):
        if layer is not None:
            message = f"{message} (layer={layer!r}"
            message += f", timestep={timestep})" if timestep is not None else ")"
        super().__init__(message)
        self.layer = layer
        self.timestep = timestep


class FormatError(SpikeBridgeError):
    """Malformed binary or text file; carries the byte offset of the defect."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BuildError(SpikeBridgeError):
    """Model spec could not be realized; names the offending layer."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"{message} (layer={layer!r})"
        super().__init__(message)
        self.layer = layer


class ResourceError(SpikeBridgeError):
    """A resource budget (memory) would be exceeded."""


class VerificationError(SpikeBridgeError):
    """A hardware/software equivalence check failed."""
