"""Mask files: binary PGM (P5, 255 inside) with a JSON sidecar holding the grid."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import GridSpec, SetMask


def write_mask(E: SetMask, stem) -> tuple[Path, Path]:
    """Write ``stem.pgm`` and ``stem.json``; image row 0 is the top of the domain."""
    stem = Path(stem)
    pgm, meta = stem.with_suffix(".pgm"), stem.with_suffix(".json")
    img = np.where(np.flipud(E.inside), 255, 0).astype(np.uint8)
    ny, nx = img.shape
    with open(pgm, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    with open(meta, "w") as fh:
        json.dump(E.grid.to_dict(), fh, indent=2)
    return pgm, meta


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    out, pos = [], 0
    while len(out) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos + 1


def read_mask(stem) -> SetMask:
    """Read a mask written by :func:`write_mask` (any nonzero pixel is inside)."""
    stem = Path(stem)
    data = stem.with_suffix(".pgm").read_bytes()
    (magic, w, hgt, maxval), pos = _tokens(data, 4)
    if magic != b"P5" or int(maxval) > 255:
        raise ValueError("expected an 8-bit binary PGM (P5)")
    nx, ny = int(w), int(hgt)
    img = np.frombuffer(data, dtype=np.uint8, count=nx * ny, offset=pos).reshape(ny, nx)
    grid = GridSpec.from_dict(json.loads(stem.with_suffix(".json").read_text()))
    if grid.shape != (ny, nx):
        raise ValueError("sidecar grid does not match the image size")
    return SetMask(grid, np.flipud(img) > 0)
