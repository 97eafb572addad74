"""Exception hierarchy shared by every layer of the engine."""


class MPCError(Exception):
    """Base class for all engine errors."""


class UsageError(MPCError, ValueError):
    """Caller passed arguments that violate an operation's contract."""


class RangeError(MPCError, ValueError):
    """A value does not fit the configured fixed-point range."""


class ConfigError(MPCError, ValueError):
    """Invalid combination of ring width, precision and exponent bits."""


class TransportError(MPCError, ConnectionError):
    """A peer could not be reached or dropped the connection."""

    def __init__(self, message, peer=None):
        super().__init__(message)
        self.peer = peer


class HandshakeError(TransportError):
    """Peers disagree on the session parameters."""


class ProtocolError(MPCError):
    """Malformed frame, unexpected message type or width mismatch."""


class SessionAborted(MPCError):
    """Another party failed and the session was torn down."""


class InputError(MPCError, ValueError):
    """Malformed user input (CSV rows, share files)."""
