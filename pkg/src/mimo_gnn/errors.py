"""Exception types raised across the package."""


class MimoGnnError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(MimoGnnError, ValueError):
    pass


class NotSymmetric(MimoGnnError, ValueError):
    pass


class UnsupportedOrder(MimoGnnError, ValueError):
    pass


class IndexOutOfRange(MimoGnnError, IndexError):
    pass


class LengthMismatch(MimoGnnError, ValueError):
    pass


class ShapeMismatch(MimoGnnError, ValueError):
    pass


class ZeroNoiseVariance(MimoGnnError, ValueError):
    pass


class NonFiniteMessage(MimoGnnError, FloatingPointError):
    """BP produced a non-finite message or belief (divergence)."""


class TooLarge(MimoGnnError, ValueError):
    pass


class TapeNotScalarRooted(MimoGnnError, ValueError):
    pass


class EmptyDataset(MimoGnnError, ValueError):
    pass


class BadFractions(MimoGnnError, ValueError):
    pass


class IoFailure(MimoGnnError, OSError):
    pass


class CorruptFile(MimoGnnError, ValueError):
    pass


class ArchMismatch(MimoGnnError, ValueError):
    pass


class MissingWeights(MimoGnnError, ValueError):
    pass
