"""Attribute coding: SH color, opacity, and covariance streams.

SH coefficients are converted to YUV per band, transformed with the shared
hierarchical transform, uniformly quantized and run-length Golomb-Rice
coded, one sub-stream per (band, channel). Opacity runs the same pipeline
single-channel. Covariance travels either losslessly (fixed-point
prediction residuals) or through two small vector-quantization codebooks
weighted by each Gaussian's rendered footprint proxy.

Every payload here is a self-contained section:
[u8 kind][u8 params length][params][u32 sub-stream count]
followed by a u32 length + bytes per sub-stream.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import entropy
from ._bitio import BitstreamError
from .model import canonical_quaternion
from .raht import dequantize, quantize
from .voxel import gaussian_volume

SECTION_SH = 1
SECTION_OPACITY = 2
SECTION_COV_LOSSLESS = 3
SECTION_COV_VQ = 4

# fixed-point steps for the lossless covariance path
QUAT_STEP = 2.0 ** -12
LOG_SCALE_STEP = 2.0 ** -8

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")

# full-range BT.709 analog weights, applied to every SH band
_RGB_TO_YUV = np.array(
    [
        [0.2126, 0.7152, 0.0722],
        [-0.2126 / 1.8556, -0.7152 / 1.8556, (1.0 - 0.0722) / 1.8556],
        [(1.0 - 0.2126) / 1.5748, -0.7152 / 1.5748, -0.0722 / 1.5748],
    ]
)
_YUV_TO_RGB = np.linalg.inv(_RGB_TO_YUV)


@dataclass
class QuantParams:
    """Quantization steps for the transform-coded attributes.

    q_dc and q_op default to a quarter of q_ac; the DC band and opacity
    are kept finer than the high-frequency SH bands.
    """

    q_ac: float
    q_dc: float = None
    q_op: float = None

    def __post_init__(self):
        if self.q_dc is None:
            self.q_dc = self.q_ac / 4.0
        if self.q_op is None:
            self.q_op = self.q_ac / 4.0
        for name in ("q_dc", "q_ac", "q_op"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)


@dataclass
class Codebook:
    """Trained VQ codebook plus the per-point assignments."""

    entries: np.ndarray
    indices: np.ndarray
    padded: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def size(self):
        return self.entries.shape[0]


def sh_to_yuv(rgb):
    """Per-band RGB -> YUV (full range, no offset)."""
    return np.asarray(rgb, dtype=np.float64) @ _RGB_TO_YUV.T


def yuv_to_sh(yuv):
    """Exact inverse of sh_to_yuv."""
    return np.asarray(yuv, dtype=np.float64) @ _YUV_TO_RGB.T


def _pack_section(kind, params, streams):
    if len(params) > 255:
        raise ValueError("params block exceeds one byte of length")
    parts = [bytes([kind, len(params)]), bytes(params),
             _U32.pack(len(streams))]
    for s in streams:
        parts.append(_U32.pack(len(s)))
        parts.append(s)
    return b"".join(parts)


def _parse_section(data, expect_kind):
    data = bytes(data)
    if len(data) < 2:
        raise BitstreamError("attribute section shorter than its header")
    kind, plen = data[0], data[1]
    if kind != expect_kind:
        raise BitstreamError(
            "expected section kind %d, found %d" % (expect_kind, kind)
        )
    pos = 2
    if pos + plen + 4 > len(data):
        raise BitstreamError("attribute section header truncated")
    params = data[pos : pos + plen]
    pos += plen
    (count,) = _U32.unpack_from(data, pos)
    pos += 4
    streams = []
    for _ in range(count):
        if pos + 4 > len(data):
            raise BitstreamError("sub-stream length header truncated")
        (length,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + length > len(data):
            raise BitstreamError("sub-stream extends past the section")
        streams.append(data[pos : pos + length])
        pos += length
    if pos != len(data):
        raise BitstreamError("trailing bytes after attribute sub-streams")
    return params, streams


def _quantize_band(coeffs, dc_step, ac_step):
    """Coefficient 0 is the band's spatial mean; keep it on the fine step
    so an infinite ac_step degrades a band to its mean instead of zero."""
    q = np.zeros(coeffs.shape[0], dtype=np.int64)
    q[:1] = quantize(coeffs[:1], dc_step)
    q[1:] = quantize(coeffs[1:], ac_step)
    return q


def _dequantize_band(q, dc_step, ac_step):
    out = np.zeros(q.shape[0], dtype=np.float64)
    out[:1] = dequantize(q[:1], dc_step)
    out[1:] = dequantize(q[1:], ac_step)
    return out


def encode_sh(plan, sh_dc, sh_ac, params):
    """48 sub-streams: 16 SH bands x 3 YUV channels, band-major."""
    sh_dc = np.asarray(sh_dc, dtype=np.float64)
    sh_ac = np.asarray(sh_ac, dtype=np.float64)
    m = plan.count
    if sh_dc.shape != (m, 3) or sh_ac.shape != (m, 15, 3):
        raise ValueError("attribute counts do not match the leaf count")
    header = _F64.pack(params.q_dc) + _F64.pack(params.q_ac)
    streams = []
    for band in range(16):
        rgb = sh_dc if band == 0 else sh_ac[:, band - 1, :]
        coeffs = plan.forward(sh_to_yuv(rgb))
        band_step = params.q_dc if band == 0 else params.q_ac
        for chan in range(3):
            q = _quantize_band(coeffs[:, chan], params.q_dc, band_step)
            streams.append(entropy.rlgr_encode(q))
    return _pack_section(SECTION_SH, header, streams)


def decode_sh(section, plan):
    """Inverse of encode_sh; returns (sh_dc, sh_ac)."""
    params, streams = _parse_section(section, SECTION_SH)
    if len(params) != 16:
        raise BitstreamError("SH section carries malformed parameters")
    q_dc = _F64.unpack_from(params, 0)[0]
    q_ac = _F64.unpack_from(params, 8)[0]
    if len(streams) != 48:
        raise BitstreamError("SH section must carry 48 sub-streams")
    m = plan.count
    sh_dc = np.zeros((m, 3))
    sh_ac = np.zeros((m, 15, 3))
    for band in range(16):
        band_step = q_dc if band == 0 else q_ac
        coeffs = np.zeros((m, 3))
        for chan in range(3):
            q = entropy.rlgr_decode(streams[band * 3 + chan])
            if q.shape[0] != m:
                raise BitstreamError(
                    "SH sub-stream length %d does not match %d leaves"
                    % (q.shape[0], m)
                )
            coeffs[:, chan] = _dequantize_band(q, q_dc, band_step)
        rgb = yuv_to_sh(plan.inverse(coeffs))
        if band == 0:
            sh_dc = rgb
        else:
            sh_ac[:, band - 1, :] = rgb
    return sh_dc, sh_ac


def encode_opacity(plan, opacities, q_op):
    """Single-channel transform coding of opacity."""
    opacities = np.asarray(opacities, dtype=np.float64)
    if opacities.shape != (plan.count,):
        raise ValueError("opacity count does not match the leaf count")
    if not q_op > 0:
        raise ValueError("q_op must be positive")
    q = quantize(plan.forward(opacities), q_op)
    return _pack_section(
        SECTION_OPACITY, _F64.pack(q_op), [entropy.rlgr_encode(q)]
    )


def decode_opacity(section, plan):
    """Inverse of encode_opacity; output clamped to [0, 1]."""
    params, streams = _parse_section(section, SECTION_OPACITY)
    if len(params) != 8 or len(streams) != 1:
        raise BitstreamError("opacity section is malformed")
    q_op = _F64.unpack_from(params, 0)[0]
    q = entropy.rlgr_decode(streams[0])
    if q.shape[0] != plan.count:
        raise BitstreamError("opacity sub-stream length mismatch")
    return np.clip(plan.inverse(dequantize(q, q_op)), 0.0, 1.0)


def _predict_encode(values, step):
    q = quantize(values, step)
    return entropy.rlgr_encode(np.diff(q, prepend=0))


def _predict_decode(stream, step, count):
    residuals = entropy.rlgr_decode(stream)
    if residuals.shape[0] != count:
        raise BitstreamError("covariance sub-stream length mismatch")
    return dequantize(np.cumsum(residuals), step)


def encode_covariance_lossless(rotations, scales):
    """Fixed-point prediction coding of quaternions and log-scales.

    Exact at the declared precision: quaternion components on a 2^-12
    grid, log-scales on 2^-8. Inputs must already be in Morton order so
    the previous-neighbor prediction sees spatially coherent runs.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    streams = [
        _predict_encode(rotations[:, k], QUAT_STEP) for k in range(4)
    ]
    log_s = np.log(scales)
    streams += [
        _predict_encode(log_s[:, k], LOG_SCALE_STEP) for k in range(3)
    ]
    header = _F64.pack(QUAT_STEP) + _F64.pack(LOG_SCALE_STEP)
    return _pack_section(SECTION_COV_LOSSLESS, header, streams)


def decode_covariance_lossless(section, count):
    """Inverse; returns (rotations, scales) at fixed-point precision."""
    params, streams = _parse_section(section, SECTION_COV_LOSSLESS)
    if len(params) != 16 or len(streams) != 7:
        raise BitstreamError("covariance section is malformed")
    quat_step = _F64.unpack_from(params, 0)[0]
    log_step = _F64.unpack_from(params, 8)[0]
    rotations = np.stack(
        [_predict_decode(streams[k], quat_step, count) for k in range(4)],
        axis=1,
    )
    log_s = np.stack(
        [_predict_decode(streams[4 + k], log_step, count) for k in range(3)],
        axis=1,
    )
    return rotations, np.exp(log_s)


def vq_train(vectors, weights, k, iterations=20, seed=0):
    """Weighted k-means codebook with a k-means++ start.

    Deterministic for a given seed. If the input has at most k distinct
    vectors the codebook is exact, padded with duplicates, and flagged.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = vectors.shape[0]
    if k < 1:
        raise ValueError("codebook size must be at least 1")
    if weights.shape != (n,) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("weights must be nonnegative and not all zero")
    w = weights / weights.sum()
    distinct, inverse = np.unique(vectors, axis=0, return_inverse=True)
    if distinct.shape[0] <= k:
        entries = np.concatenate(
            [distinct,
             np.repeat(distinct[:1], k - distinct.shape[0], axis=0)]
        )
        return Codebook(entries=entries, indices=inverse.astype(np.int64),
                        padded=distinct.shape[0] < k, history=[0.0])
    rng = np.random.default_rng(seed)
    entries = np.empty((k, vectors.shape[1]))
    entries[0] = vectors[rng.choice(n, p=w)]
    d2 = np.sum((vectors - entries[0]) ** 2, axis=1)
    for j in range(1, k):
        p = w * d2
        total = p.sum()
        if total <= 0:
            entries[j] = vectors[rng.choice(n, p=w)]
        else:
            entries[j] = vectors[rng.choice(n, p=p / total)]
        d2 = np.minimum(d2, np.sum((vectors - entries[j]) ** 2, axis=1))
    history = []
    indices = None
    for _ in range(iterations):
        d = np.sum((vectors[:, None, :] - entries[None, :, :]) ** 2, axis=2)
        indices = np.argmin(d, axis=1)
        dist = d[np.arange(n), indices]
        history.append(float(np.sum(w * dist)))
        wsum = np.bincount(indices, weights=w, minlength=k)
        for dim in range(vectors.shape[1]):
            acc = np.bincount(indices, weights=w * vectors[:, dim],
                              minlength=k)
            entries[:, dim] = np.where(wsum > 0, acc / np.maximum(wsum, 1e-300),
                                       entries[:, dim])
        empty = np.flatnonzero(wsum == 0)
        if empty.size:
            contrib = w * dist
            for slot in empty:
                far = int(np.argmax(contrib))
                entries[slot] = vectors[far]
                contrib[far] = 0.0
    d = np.sum((vectors[:, None, :] - entries[None, :, :]) ** 2, axis=2)
    indices = np.argmin(d, axis=1)
    history.append(float(np.sum(w * d[np.arange(n), indices])))
    return Codebook(entries=entries, indices=indices.astype(np.int64),
                    padded=False, history=history)


def importance_weights(opacities, scales):
    """Footprint proxy alpha * volume, normalized; uniform fallback."""
    w = np.asarray(opacities, dtype=np.float64) * gaussian_volume(scales)
    total = w.sum()
    if total <= 0:
        return np.full(w.shape[0], 1.0 / max(w.shape[0], 1))
    return w / total


def encode_covariance_vq(rotations, scales, opacities, k_rot, k_scale,
                         seed=0, iterations=20):
    """Two-codebook VQ of the covariance parameters."""
    rotations = np.asarray(rotations, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    for k in (k_rot, k_scale):
        if not 1 <= k <= 32768:
            raise ValueError("codebook sizes must be in [1, 32768]")
    w = importance_weights(opacities, scales)
    rot_book = vq_train(rotations, w, k_rot, iterations=iterations,
                        seed=seed)
    scale_book = vq_train(np.log(scales), w, k_scale,
                          iterations=iterations, seed=seed + 1)
    # centroids drift off the unit sphere; renormalize, identity fallback
    # for the measure-zero case of a fully cancelled mean
    safe = rot_book.entries.copy()
    safe[np.linalg.norm(safe, axis=1) <= 1e-12] = (1.0, 0.0, 0.0, 0.0)
    rot_entries = canonical_quaternion(safe)
    header = _U32.pack(k_rot) + _U32.pack(k_scale)
    streams = [
        rot_entries.astype("<f4").tobytes(),
        scale_book.entries.astype("<f4").tobytes(),
        entropy.ac_encode(rot_book.indices, k_rot),
        entropy.ac_encode(scale_book.indices, k_scale),
    ]
    return _pack_section(SECTION_COV_VQ, header, streams)


def decode_covariance_vq(section, count):
    """Inverse; returns (rotations, scales) mapped through the books."""
    params, streams = _parse_section(section, SECTION_COV_VQ)
    if len(params) != 8 or len(streams) != 4:
        raise BitstreamError("VQ section is malformed")
    k_rot = _U32.unpack_from(params, 0)[0]
    k_scale = _U32.unpack_from(params, 4)[0]
    if len(streams[0]) != k_rot * 16 or len(streams[1]) != k_scale * 12:
        raise BitstreamError("VQ codebook sizes do not match the header")
    rot_entries = np.frombuffer(streams[0], dtype="<f4") \
        .reshape(k_rot, 4).astype(np.float64)
    scale_entries = np.frombuffer(streams[1], dtype="<f4") \
        .reshape(k_scale, 3).astype(np.float64)
    rot_idx = entropy.ac_decode(streams[2], k_rot)
    scale_idx = entropy.ac_decode(streams[3], k_scale)
    if rot_idx.shape[0] != count or scale_idx.shape[0] != count:
        raise BitstreamError("VQ index streams do not match the leaf count")
    return rot_entries[rot_idx], np.exp(scale_entries[scale_idx])
