"""Exception hierarchy shared by all ddgen modules."""


class DdgenError(Exception):
    """Base class for all ddgen errors."""


class ArgumentError(DdgenError):
    """A precondition on an argument was violated."""


class ShapeError(DdgenError):
    """Array dimensions do not match what the operation requires."""


class InputError(DdgenError):
    """Non-finite or otherwise invalid numeric input."""


class FormatError(DdgenError):
    """A file does not conform to its on-disk format."""


class TrainingError(DdgenError):
    """Training produced a non-finite loss or otherwise diverged."""


class WalkError(DdgenError):
    """A gradient walk hit a non-finite gradient."""


class GenerationError(DdgenError):
    """Sample generation could not produce any output."""


class NumericalError(DdgenError):
    """A numerical routine left its domain of validity."""
