"""Portable FloatMap (PFM) reading and writing.

Float layers (depth, shading, albedo, residual, soft masks) are stored as
32-bit PFM so save/load round-trips are bit exact. Scanlines follow the PFM
convention (bottom-up); the scale field is -1.0 (little endian).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError


def write_pfm(path, data: np.ndarray) -> None:
    """Write an (H, W) or (H, W, 3) float32 array as PFM."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"PFM supports HxW or HxWx3 arrays, got {data.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into float32, shape (H, W) or (H, W, 3)."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ParseError(path, f"not a PFM file (magic {magic!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ParseError(path, "malformed dimensions line")
        try:
            w, h = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except ValueError as e:
            raise ParseError(path, f"malformed header: {e}") from None
        if w <= 0 or h <= 0:
            raise ParseError(path, f"bad dimensions {w}x{h}")
        endian = "<" if scale < 0 else ">"
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ParseError(path, "truncated pixel data")
        data = np.frombuffer(raw, dtype=endian + "f4").reshape(h, w, channels)
    data = np.flipud(data).astype(np.float32)
    if abs(scale) not in (0.0, 1.0):
        data = data * abs(scale)
    return data[:, :, 0] if channels == 1 else data
