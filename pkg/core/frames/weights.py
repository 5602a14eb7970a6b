"""
Weight file codec shared by the labeler model, LoRA adapters and base matrices.

Layout: 8-byte little-endian header length, UTF-8 JSON header (must carry
"shapes"), then every array as little-endian float64 in header order.
"""
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from core.utils.error_handling import FrameFormatError

_LENGTH = struct.Struct("<Q")


def write_weights(path: Path, header: Dict[str, Any], arrays: Sequence[np.ndarray]) -> None:
    header = dict(header)
    header["shapes"] = [list(np.shape(a)) for a in arrays]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_LENGTH.pack(len(header_bytes)) + header_bytes + payload)


def read_weights(path: Path) -> Tuple[Dict[str, Any], List[np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise FrameFormatError(f"Weights file not found: {path}", path=str(path))
    data = path.read_bytes()
    if len(data) < _LENGTH.size:
        raise FrameFormatError("Weights file too short for a header", path=str(path))

    (header_len,) = _LENGTH.unpack_from(data, 0)
    start = _LENGTH.size
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
        shapes = [tuple(int(n) for n in s) for s in header["shapes"]]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise FrameFormatError(f"Malformed weights header: {e}", path=str(path)) from e

    offset = start + header_len
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise FrameFormatError(f"Weights payload truncated at shape {shape}", path=str(path))
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape))
        offset = end
    if offset != len(data):
        raise FrameFormatError(f"{len(data) - offset} trailing bytes after weights payload", path=str(path))
    return header, arrays
