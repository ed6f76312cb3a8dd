"""Morton (Z-order) codes for 3D integer grids, 21 bits per axis."""

import numpy as np

MAX_BITS = 21  # 3 * 21 = 63 bits fits a signed int64


def part1by2(v):
    """Spread the low 21 bits of v so consecutive bits land 3 apart."""
    v = np.asarray(v, dtype=np.uint64)
    v &= np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def compact1by2(v):
    """Inverse of part1by2: gather every third bit into the low 21."""
    v = np.asarray(v, dtype=np.uint64)
    v &= np.uint64(0x1249249249249249)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return v


def morton3(coords):
    """Interleave (..., 3) integer coordinates; x is most significant.

    Returns int64 codes with the same leading shape.
    """
    coords = np.asarray(coords)
    if coords.shape[-1] != 3:
        raise ValueError("coords must have a trailing axis of size 3")
    if coords.size and (coords.min() < 0 or coords.max() >= 1 << MAX_BITS):
        raise ValueError("coordinates must fit in %d unsigned bits" % MAX_BITS)
    x = part1by2(coords[..., 0])
    y = part1by2(coords[..., 1])
    z = part1by2(coords[..., 2])
    return ((x << np.uint64(2)) | (y << np.uint64(1)) | z).astype(np.int64)


def unmorton3(codes):
    """Inverse of morton3; returns (..., 3) int64 coordinates."""
    codes = np.asarray(codes)
    if codes.size and codes.min() < 0:
        raise ValueError("morton codes must be nonnegative")
    c = codes.astype(np.uint64)
    out = np.stack(
        [
            compact1by2(c >> np.uint64(2)),
            compact1by2(c >> np.uint64(1)),
            compact1by2(c),
        ],
        axis=-1,
    )
    return out.astype(np.int64)
