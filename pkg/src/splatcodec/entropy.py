"""Entropy coding: adaptive run-length Golomb-Rice and arithmetic coding.

Two interchangeable backends implement the kernels: the Cython module
``splatcodec._kernels`` and the pure-Python ``splatcodec._kernels_py``. They
are bit-exact twins; the compiled one is picked at import when present.
Set ``SPLATCODEC_PURE_PYTHON=1`` to force the fallback.

Every payload is framed as ``[u32 element count][coded bytes]`` so decoders
never depend on stream exhaustion.
"""

import importlib
import os

import numpy as np

from ._bitio import BitReader, BitstreamError, BitWriter

__all__ = [
    "BACKEND", "BitReader", "BitWriter", "BitstreamError",
    "ac_decode", "ac_encode", "get_backend", "rlgr_decode", "rlgr_encode",
    "unzigzag", "zigzag",
]

if os.environ.get("SPLATCODEC_PURE_PYTHON"):
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"

ac_encode = _impl.ac_encode
ac_decode = _impl.ac_decode
rlgr_encode = _impl.rlgr_encode
rlgr_decode = _impl.rlgr_decode


def get_backend(name):
    """Return the named kernel module (``"compiled"`` or ``"python"``).

    Used by the benchmark and the cross-backend tests; raises ImportError if
    the compiled module is unavailable.
    """
    if name == "python":
        return importlib.import_module("splatcodec._kernels_py")
    if name == "compiled":
        return importlib.import_module("splatcodec._kernels")
    raise ValueError("unknown backend %r" % (name,))


def zigzag(values):
    """Map signed integers to unsigned: 0, -1, 1, -2 -> 0, 1, 2, 3."""
    v = np.asarray(values, dtype=np.int64)
    out = np.where(v >= 0, v << 1, (-v << 1) - 1)
    return out if out.ndim else int(out)


def unzigzag(values):
    """Inverse of :func:`zigzag`."""
    u = np.asarray(values, dtype=np.int64)
    if u.size and u.min() < 0:
        raise ValueError("zigzag codes are non-negative")
    out = np.where(u & 1, -((u + 1) >> 1), u >> 1)
    return out if out.ndim else int(out)
