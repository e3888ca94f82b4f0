"""Exception hierarchy shared across the testbed."""


class FlError(Exception):
    """Base class for all testbed errors."""


class ConfigError(FlError):
    """Invalid node/federation configuration."""


class SerializationError(FlError):
    """A payload cannot be encoded (non-finite number, unsupported type)."""


class ParseError(FlError):
    """Malformed payload or wire body; carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TransportError(FlError):
    """Bind, connect, or send failure on the wire."""


class ProtocolTimeout(FlError):
    """Expected envelopes did not arrive in time."""

    def __init__(self, message: str, *, phase=None, iteration=None, missing=()):
        super().__init__(message)
        self.phase = phase
        self.iteration = iteration
        self.missing = tuple(missing)


class CallbackError(FlError):
    """A user callback raised; the original exception is chained."""


class UsageError(FlError):
    """API misuse: wrong thread/state, reuse after shutdown, bad argument."""


class LaunchError(FlError):
    """The launcher could not spawn a node process."""


class FaultInjected(FlError):
    """Deliberate crash requested via fault-injection flags."""
