"""Exception types raised across the package."""


class TomoError(Exception):
    """Base class for all tomomatch errors."""


class NonPositiveGrid(TomoError, ValueError):
    pass


class EmptyCloud(TomoError, ValueError):
    pass


class NonFiniteCoordinate(TomoError, ValueError):
    pass


class ParseError(TomoError, ValueError):
    pass


class EmptySlice(TomoError, ValueError):
    pass


class OutOfBounds(TomoError, IndexError):
    pass


class DegenerateConfiguration(TomoError, ValueError):
    pass


class InsufficientData(TomoError, ValueError):
    pass


class NoConsensus(TomoError):
    """No hypothesis gathered enough support."""


class EmptyHypotheses(TomoError, ValueError):
    pass


class GridMismatch(TomoError, ValueError):
    pass


class InvalidSpec(TomoError, ValueError):
    pass


class OverlapInfeasible(TomoError, ValueError):
    pass


class VersionMismatch(TomoError, ValueError):
    pass


class TruncatedPayload(TomoError, ValueError):
    pass


class CorruptHeader(TomoError, ValueError):
    pass


class ConnectionFailed(TomoError, ConnectionError):
    pass


class RemoteError(TomoError):
    """The peer answered with an ERROR message."""


class ExchangeTimeout(TomoError, TimeoutError):
    pass
