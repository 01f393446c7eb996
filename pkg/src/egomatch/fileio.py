"""Binary file formats: PPM (P6) images and Middlebury .flo flow fields.

Round-trips are bit-exact: write(read(path)) reproduces the file.
"""

from __future__ import annotations

import struct

import numpy as np

FLO_MAGIC = 202021.25


class FormatError(ValueError):
    """Raised on malformed image/flow files."""


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM (maxval 255) into a float [H, W, 3] in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    # header: P6, width, height, maxval, separated by whitespace/comments
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise FormatError(f"{path}: truncated PPM header")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a P6 PPM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    i += 1  # single whitespace byte after maxval
    if len(data) - i < w * h * 3:
        raise FormatError(f"{path}: expected {w * h * 3} pixel bytes, "
                          f"got {len(data) - i}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=i)
    return pixels.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    """Write a float [H, W, 3] image in [0, 1] as binary P6, maxval 255."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(f"write_ppm: expected [H, W, 3], got {image.shape}")
    h, w = image.shape[:2]
    u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(u8.tobytes())


def read_flo(path) -> np.ndarray:
    """Read a Middlebury .flo file into a float [H, W, 2] (u, v) field."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) != 12:
            raise FormatError(f"{path}: truncated .flo header")
        magic, w, h = struct.unpack("<fii", head)
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise FormatError(f"{path}: bad .flo magic {magic}")
        if w <= 0 or h <= 0:
            raise FormatError(f"{path}: bad .flo dimensions {w}x{h}")
        data = np.frombuffer(f.read(w * h * 2 * 4), dtype="<f4")
    if data.size != w * h * 2:
        raise FormatError(f"{path}: expected {w * h * 2} floats")
    return data.reshape(h, w, 2).astype(np.float64)


def write_flo(path, flow: np.ndarray) -> None:
    """Write a float [H, W, 2] field as a Middlebury .flo (float32)."""
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise FormatError(f"write_flo: expected [H, W, 2], got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(flow.astype("<f4").tobytes())
