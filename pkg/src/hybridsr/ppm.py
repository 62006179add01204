"""Binary PPM (P6) image I/O.

Only maxval 255 streams are accepted. Parse failures raise PpmError with the
byte offset where the stream stopped making sense.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PpmError

_WS = b" \t\r\n\v\f"
MAX_DIM = 1 << 20


@dataclass
class ImageRGB8:
    """Interleaved 8-bit RGB raster, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ConfigError(f"pixels must be (h, w, 3) uint8, got {p.shape} {p.dtype}")
        self.pixels = np.ascontiguousarray(p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


class _Scanner:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def fail(self, msg: str):
        raise PpmError(msg, self.pos)

    def skip_space(self):
        """Whitespace and '#' comments (comment runs to end of line)."""
        buf, n = self.buf, len(self.buf)
        while self.pos < n:
            ch = self.buf[self.pos : self.pos + 1]
            if ch in (b"#",):
                while self.pos < n and buf[self.pos : self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif ch and ch in _WS:
                self.pos += 1
            else:
                return

    def token(self, what: str) -> bytes:
        self.skip_space()
        start = self.pos
        buf, n = self.buf, len(self.buf)
        while self.pos < n and buf[self.pos : self.pos + 1] not in _WS and buf[self.pos : self.pos + 1] != b"#":
            self.pos += 1
        if self.pos == start:
            self.fail(f"expected {what}")
        return buf[start : self.pos]

    def number(self, what: str) -> int:
        start = self.pos
        tok = self.token(what)
        if not tok.isdigit():
            self.pos = start
            self.skip_space()
            self.fail(f"expected decimal {what}, got {tok[:16]!r}")
        return int(tok)


def decode_ppm(buf: bytes) -> ImageRGB8:
    s = _Scanner(buf)
    if buf[:2] != b"P6":
        s.fail("not a P6 stream (bad magic)")
    s.pos = 2
    width = s.number("width")
    height = s.number("height")
    maxval = s.number("maxval")
    if not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        s.fail(f"unreasonable dimensions {width}x{height}")
    if maxval != 255:
        s.fail(f"unsupported maxval {maxval} (only 255)")
    # exactly one whitespace byte separates the header from the raster
    if s.pos >= len(buf) or buf[s.pos : s.pos + 1] not in _WS:
        s.fail("missing whitespace after maxval")
    s.pos += 1
    need = 3 * width * height
    raster = buf[s.pos : s.pos + need]
    if len(raster) < need:
        s.pos = len(buf)
        s.fail(f"raster truncated: need {need} bytes, have {len(raster)}")
    if s.pos + need != len(buf):
        s.pos += need
        s.fail(f"{len(buf) - s.pos} trailing bytes after raster")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImageRGB8(arr.copy())


def encode_ppm(img: ImageRGB8) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def read_ppm(path: str | Path) -> ImageRGB8:
    return decode_ppm(Path(path).read_bytes())


def write_ppm(path: str | Path, img: ImageRGB8):
    Path(path).write_bytes(encode_ppm(img))
