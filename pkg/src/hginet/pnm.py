"""Binary portable pixmap I/O: P6 color images, P5 grayscale masks.

Only maxval 255 is supported; writes round-trip bit-exactly through
reads. Parse failures report the byte offset of the offending data.
"""

from __future__ import annotations

import numpy as np

from .errors import PixmapError

_WHITESPACE = b" \t\r\n\v\f"


class _HeaderScanner:
    """Token reader over the pixmap header, comment-aware."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _skip_separators(self):
        while self.pos < len(self.data):
            c = self.data[self.pos : self.pos + 1]
            if c in (b"#",):
                nl = self.data.find(b"\n", self.pos)
                if nl < 0:
                    raise PixmapError("unterminated comment", self.pos)
                self.pos = nl + 1
            elif c in _WHITESPACE and c:
                self.pos += 1
            else:
                return

    def token(self, what: str) -> bytes:
        self._skip_separators()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1] not in _WHITESPACE + b"#":
            self.pos += 1
        if self.pos == start:
            raise PixmapError(f"missing {what}", start)
        return self.data[start : self.pos]

    def number(self, what: str) -> int:
        tok = self.token(what)
        try:
            return int(tok)
        except ValueError:
            raise PixmapError(f"bad {what} {tok!r}", self.pos - len(tok)) from None


def parse_pixmap(data: bytes) -> np.ndarray:
    """Decode P5 -> [H, W] uint8 or P6 -> [H, W, 3] uint8."""
    scan = _HeaderScanner(data)
    magic = scan.token("magic")
    if magic not in (b"P5", b"P6"):
        raise PixmapError(f"unsupported magic {magic!r}", 0)
    width = scan.number("width")
    height = scan.number("height")
    maxval = scan.number("maxval")
    if width < 1 or height < 1:
        raise PixmapError(f"bad extents {width}x{height}", scan.pos)
    if maxval != 255:
        raise PixmapError(f"only maxval 255 is supported, got {maxval}", scan.pos)
    if scan.pos >= len(data) or data[scan.pos : scan.pos + 1] not in _WHITESPACE:
        raise PixmapError("missing separator after maxval", scan.pos)
    payload_at = scan.pos + 1
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = data[payload_at : payload_at + expected]
    if len(payload) < expected:
        raise PixmapError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}", payload_at + len(payload)
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return arr[:, :, 0].copy() if channels == 1 else arr.copy()


def read_pixmap(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pixmap(fh.read())


def _encode(magic: bytes, array: np.ndarray) -> bytes:
    height, width = array.shape[:2]
    return magic + b"\n" + f"{width} {height}\n255\n".encode() + array.tobytes()


def write_pgm(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim != 2:
        raise PixmapError(f"grayscale write expects [H, W], got {array.shape}")
    with open(path, "wb") as fh:
        fh.write(_encode(b"P5", array))


def write_ppm(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim != 3 or array.shape[2] != 3:
        raise PixmapError(f"color write expects [H, W, 3], got {array.shape}")
    with open(path, "wb") as fh:
        fh.write(_encode(b"P6", array))
