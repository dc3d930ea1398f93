"""Exception taxonomy shared across the package.

Dimension mismatches raise :class:`ShapeError` naming both offending
shapes, violated call preconditions raise :class:`ContractError`, and
invalid configurations raise :class:`ConfigError` listing the failed
constraint.  File-level problems (pixmap parsing, tensor blobs,
checkpoints) carry enough context to locate the corrupt byte or the
offending parameter path.
"""


class HGIError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(HGIError, ValueError):
    """Operand dimensions are incompatible for the requested operation."""


class ContractError(HGIError, ValueError):
    """A documented call precondition does not hold."""


class ConfigError(HGIError, ValueError):
    """A configuration violates one of its invariants."""


class DataError(HGIError, ValueError):
    """Input data is missing, unreadable, or inconsistent."""


class PixmapError(DataError):
    """A PPM/PGM stream failed to parse.

    Args:
        message: what went wrong.
        offset: byte offset of the failure inside the stream, if known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TensorFormatError(DataError):
    """A serialized tensor blob has a bad magic, header, or payload."""


class CheckpointError(DataError):
    """A checkpoint does not match the model it is being loaded into."""


class NumericError(HGIError, ArithmeticError):
    """A numeric invariant failed at runtime (non-finite loss, drift)."""
