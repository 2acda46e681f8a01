"""Binary PPM (P6) and PGM (P5) images with maxval 255."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .images import ImagePlane

__all__ = ["PnmParseError", "atomic_write_bytes", "decode_pnm", "encode_pnm", "load_ppm", "save_ppm"]

_WS = b" \t\n\r\v\f"


class PnmParseError(ValueError):
    """Malformed PNM data; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _skip_ws(data: bytes, pos: int) -> int:
    while pos < len(data):
        c = data[pos : pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c in _WS:
            pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_ws(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise PnmParseError(f"expected {what}", start)
    if pos < len(data) and data[pos : pos + 1] not in _WS and data[pos : pos + 1] != b"#":
        raise PnmParseError(f"unexpected byte after {what}", pos)
    return int(data[start:pos]), pos


def decode_pnm(data: bytes) -> ImagePlane:
    """Parse P5/P6 bytes into an image with values in ``[0, 1]``."""
    if len(data) < 2:
        raise PnmParseError("file too short for a magic number", 0)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmParseError(f"unsupported magic {magic!r}; expected P5 or P6", 0)
    channels = 3 if magic == b"P6" else 1
    pos = 2
    width, pos = _read_int(data, pos, "width")
    height, pos = _read_int(data, pos, "height")
    maxval_at = _skip_ws(data, pos)
    maxval, pos = _read_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PnmParseError("width and height must be positive", maxval_at)
    if maxval != 255:
        raise PnmParseError(f"only maxval 255 is supported, got {maxval}", maxval_at)
    if pos >= len(data) or data[pos : pos + 1] not in _WS:
        raise PnmParseError("missing whitespace before raster", pos)
    pos += 1
    need = width * height * channels
    if len(data) - pos < need:
        raise PnmParseError(f"raster truncated: need {need} bytes, have {len(data) - pos}", len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return ImagePlane(raster.reshape(height, width, channels).astype(np.float64) / 255.0)


def encode_pnm(img: ImagePlane) -> bytes:
    """Encode as P6 (3 channels) or P5 (1 channel), rounding to 8 bits."""
    magic = b"P6" if img.channels == 3 else b"P5"
    raster = np.round(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + raster.tobytes()


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write to a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_ppm(path: str | os.PathLike) -> ImagePlane:
    return decode_pnm(Path(path).read_bytes())


def save_ppm(path: str | os.PathLike, img: ImagePlane) -> None:
    atomic_write_bytes(path, encode_pnm(img))
