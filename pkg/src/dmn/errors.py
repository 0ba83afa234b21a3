"""Exception hierarchy shared by every module of the package."""


class DmnError(Exception):
    """Base class for all package errors."""


class NonPhysicalMaterial(DmnError, ValueError):
    """Elastic constants outside the admissible range."""


class ZeroBlock(DmnError):
    """Both children of a building block carry zero weight."""


class DegenerateNetwork(DmnError):
    """Total network weight is zero."""


class DegeneratePhase(DmnError):
    """A phase volume fraction is 0 or 1 where a strict interior value is needed."""


class DepthMismatch(DmnError, ValueError):
    """Two parameter sets with different depths were combined."""


class SingularInterfaceBlock(DmnError):
    """The 3x3 interface (345) block of a laminate is numerically singular.

    Attributes
    ----------
    address : tuple[int, int] or None
        ``(layer, index)`` of the offending building block, 1-based.
    """

    def __init__(self, message, address=None):
        if address is not None:
            message = f"{message} at block {address}"
        super().__init__(message)
        self.address = address


class SingularInPlaneBlock(SingularInterfaceBlock):
    """The 3x3 in-plane (126) compliance block is numerically singular."""


class SingularRootSystem(DmnError):
    """The mask-reduced root system cannot be solved."""


class NonFinite(DmnError):
    """Loss or gradient became NaN/inf during training."""

    def __init__(self, message, epoch=None, sample=None):
        super().__init__(message)
        self.epoch = epoch
        self.sample = sample


class NoConvergence(DmnError):
    """Online fixed-point iteration did not reach the tolerance."""

    def __init__(self, message, max_iter=None, increment=None):
        super().__init__(message)
        self.max_iter = max_iter
        self.increment = increment


class NonConvergedReturn(DmnError):
    """Return mapping failed to converge (unused for linear hardening)."""
