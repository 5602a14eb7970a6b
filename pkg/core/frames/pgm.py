"""
Binary PGM (P5) reader and writer for 8- and 16-bit grayscale frames.

16-bit samples are big-endian as required by the netpbm format.
"""
from pathlib import Path
from typing import Tuple

import numpy as np

from core.config import FrameDefaults
from core.utils.error_handling import FrameFormatError

_WHITESPACE = b" \t\r\n"


def _read_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Return the next header token and the position just after it, skipping comments."""
    while pos < len(data):
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif data[pos:pos + 1] in (b" ", b"\t", b"\r", b"\n"):
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos:pos + 1] not in (b" ", b"\t", b"\r", b"\n", b"#"):
        pos += 1
    return data[start:pos], pos


def decode_pgm(data: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, int]:
    """
    Decode a P5 image.

    Returns:
        (counts, maxval) where counts is an (H, W) uint16 array of stored sample values
    """
    magic, pos = _read_token(data, 0)
    if magic != b"P5":
        raise FrameFormatError(f"Not a binary PGM (magic {magic!r})", path=source)

    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError as e:
            raise FrameFormatError(f"Malformed PGM header token {token!r}", path=source) from e
    width, height, maxval = fields

    if not 1 <= maxval <= FrameDefaults.MAX_MAXVAL:
        raise FrameFormatError(f"Unsupported PGM maxval {maxval}", path=source)
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\r", b"\n"):
        raise FrameFormatError("PGM header not terminated by whitespace", path=source)
    pos += 1

    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    expected = width * height * dtype.itemsize
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise FrameFormatError(
            f"Truncated PGM payload: expected {expected} bytes, found {len(payload)}", path=source
        )

    counts = np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(np.uint16)
    if int(counts.max(initial=0)) > maxval:
        raise FrameFormatError(f"Sample value exceeds maxval {maxval}", path=source)
    return counts, maxval


def encode_pgm(counts: np.ndarray, maxval: int) -> bytes:
    """Encode an (H, W) array of integer sample values as P5; one byte per sample below maxval 256."""
    if not 1 <= maxval <= FrameDefaults.MAX_MAXVAL:
        raise FrameFormatError(f"Unsupported maxval {maxval}; must lie in [1, {FrameDefaults.MAX_MAXVAL}]")
    if counts.size and int(counts.max()) > maxval:
        raise FrameFormatError(f"Sample value exceeds maxval {maxval}")
    height, width = counts.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    dtype = np.uint8 if maxval < 256 else ">u2"
    return header + np.ascontiguousarray(counts, dtype=dtype).tobytes()


def read_pgm(path: Path) -> Tuple[np.ndarray, int]:
    path = Path(path)
    if not path.is_file():
        raise FrameFormatError(f"missing frame: {path}", path=str(path))
    return decode_pgm(path.read_bytes(), source=str(path))


def write_pgm(path: Path, counts: np.ndarray, maxval: int) -> None:
    Path(path).write_bytes(encode_pgm(counts, maxval))
