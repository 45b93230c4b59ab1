class MFPartError(Exception):
    """Base class for errors raised by mfpart."""


class FormatError(MFPartError, ValueError):
    pass


class EmptyInputError(MFPartError, ValueError):
    pass


class DegenerateSeriesError(MFPartError, ValueError):
    """The series carries no mass (e.g. prices constant throughout)."""


class InsufficientScalingRange(MFPartError):
    pass


class IncompatibleMembersError(MFPartError, ValueError):
    pass


class UnreliableTestError(MFPartError):
    pass
