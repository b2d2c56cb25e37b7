"""Exception hierarchy shared by every pipeline stage."""


class EngageError(Exception):
    """Base class for all errors raised by engagekit."""


class InputError(EngageError, ValueError):
    """Raised when input data violates a documented contract."""


# session-io
class MalformedHeader(InputError):
    pass


class NonFiniteSample(InputError):
    pass


class EmptyTrack(InputError):
    pass


class UnsupportedEncoding(InputError):
    pass


class CorruptContainer(InputError):
    pass


class RangeViolation(InputError):
    pass


class NonMonotoneTimestamps(InputError):
    pass


class WindowOutsideTrack(InputError):
    pass


class EmptyWindow(InputError):
    pass


# signal processing
class SolverNonConvergence(EngageError, RuntimeError):
    pass


class WindowTooShort(InputError):
    pass


class NyquistViolation(InputError):
    pass


class SignalTooShort(InputError):
    pass


class ClipTooShort(InputError):
    pass


# labeling / ml
class EmptyCalibration(InputError):
    pass


class DegenerateInput(InputError):
    pass


class EmptyMatrix(InputError):
    pass


class MinorityTooSmall(InputError):
    pass


class NoCompleteVectors(InputError):
    pass


class SingleClassTraining(InputError):
    pass


class NonFiniteFeature(InputError):
    pass


# evaluation
class ClassTooSmall(InputError):
    pass


class LengthMismatch(InputError):
    pass


class UnwritablePath(EngageError, OSError):
    pass


class ConfigError(EngageError, ValueError):
    """Unknown or malformed configuration key."""
