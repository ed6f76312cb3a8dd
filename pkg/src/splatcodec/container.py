"""Bitstream container: a self-describing file holding the geometry
payload and the attribute sections.

Layout, all little-endian:
  magic "GSC1", version u8, vox-mode u8, j_low u8, j_high u8,
  cov-mode u8, flags u8, cube origin 3xf64, cube side f64,
  q_dc/q_ac/q_op f64, k_rot/k_scale u32, seed u64,
  n_source u32, m_leaves u32, section count u8,
  then per section (kind u8, offset u64, length u64), then payloads.

Decode needs nothing but the file: quantization steps and codebook
sizes ride in the header, the octree payload carries its own depths.
"""

import struct
import time
from dataclasses import dataclass, replace

import numpy as np

from . import attrcodec, octree, voxel
from ._bitio import BitstreamError
from .attrcodec import QuantParams
from .model import GaussianCloud, canonical_quaternion
from .raht import RahtPlan

MAGIC = b"GSC1"
VERSION = 1

SECTION_GEOMETRY = 0

VOX_MODES = ("uniform", "adaptive", "adaptive-w2-oracle")
COV_MODES = ("lossless", "vq")

_HEADER = struct.Struct("<4s6B7dIIQIIB")
_TABLE_ENTRY = struct.Struct("<BQQ")


@dataclass
class EncodeConfig:
    """Full description of one encode: voxelization, quantization,
    covariance path. Everything needed to reproduce the bitstream."""

    mode: str = "adaptive"
    j_uni: int = None
    j_low: int = 6
    j_high: int = 10
    v_percent: float = 1.0
    tau1: float = 4.0
    q_ac: float = 0.008
    q_dc: float = None
    q_op: float = None
    cov_mode: str = "lossless"
    k_rot: int = 64
    k_scale: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in VOX_MODES:
            raise ValueError("unknown voxelization mode %r" % self.mode)
        if self.cov_mode not in COV_MODES:
            raise ValueError("unknown covariance mode %r" % self.cov_mode)
        if self.mode == "uniform":
            if self.j_uni is None:
                raise ValueError("uniform mode requires j_uni")
        elif self.j_uni is not None:
            raise ValueError("j_uni applies to uniform mode only")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    def quant(self):
        return QuantParams(q_ac=self.q_ac, q_dc=self.q_dc, q_op=self.q_op)

    def depths(self):
        if self.mode == "uniform":
            return self.j_uni, self.j_uni
        return self.j_low, self.j_high


def voxelize(cloud, config):
    """Run the configured voxelizer over the cloud."""
    if config.mode == "uniform":
        return voxel.uniform_voxelize(cloud, config.j_uni)
    params = voxel.AdaptiveParams(
        j_low=config.j_low, j_high=config.j_high,
        v_percent=config.v_percent, tau1=config.tau1,
    )
    criterion = "w2" if config.mode == "adaptive-w2-oracle" else "fast"
    return voxel.adaptive_voxelize(cloud, params, criterion=criterion)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, BitstreamError) as exc:
        raise type(exc)("stage '%s': %s" % (name, exc)) from exc


def _assemble(config, cube, n_source, m_leaves, sections):
    quant = config.quant()
    jl, jh = config.depths()
    header = _HEADER.pack(
        MAGIC, VERSION, VOX_MODES.index(config.mode), jl, jh,
        COV_MODES.index(config.cov_mode), 0,
        cube.origin[0], cube.origin[1], cube.origin[2], cube.side,
        quant.q_dc, quant.q_ac, quant.q_op,
        config.k_rot, config.k_scale, config.seed,
        n_source, m_leaves, len(sections),
    )
    offset = len(header) + _TABLE_ENTRY.size * len(sections)
    table = []
    for kind, payload in sections:
        table.append(_TABLE_ENTRY.pack(kind, offset, len(payload)))
        offset += len(payload)
    return b"".join([header] + table + [p for _, p in sections])


def encode_voxelized(vox, config, n_source):
    """Containerize an already-voxelized cloud (geometry + attributes)."""
    quant = config.quant()
    sections = []
    tree = _stage("octree", octree.build_octree, vox)
    sections.append(
        (SECTION_GEOMETRY, _stage("geometry", octree.encode_geometry, tree))
    )
    if vox.count:
        plan = _stage("transform-plan", RahtPlan, vox.coords, vox.j_high)
        sections.append((
            attrcodec.SECTION_SH,
            _stage("sh", attrcodec.encode_sh, plan, vox.sh_dc, vox.sh_ac,
                   quant),
        ))
        sections.append((
            attrcodec.SECTION_OPACITY,
            _stage("opacity", attrcodec.encode_opacity, plan,
                   vox.opacities, quant.q_op),
        ))
        if config.cov_mode == "lossless":
            sections.append((
                attrcodec.SECTION_COV_LOSSLESS,
                _stage("covariance", attrcodec.encode_covariance_lossless,
                       vox.rotations, vox.scales),
            ))
        else:
            sections.append((
                attrcodec.SECTION_COV_VQ,
                _stage("covariance", attrcodec.encode_covariance_vq,
                       vox.rotations, vox.scales, vox.opacities,
                       config.k_rot, config.k_scale, seed=config.seed),
            ))
    blob = _assemble(config, vox.cube, n_source, vox.count, sections)
    return blob, sections


def encode(cloud, config):
    """Model to container bytes, plus a summary record."""
    start = time.perf_counter()
    if cloud.count == 0:
        cube = voxel.BoundingCube(origin=np.zeros(3), side=1.0)
        empty = voxel.VoxelizedCloud(
            cube=cube, j_high=config.depths()[1],
            coords=np.zeros((0, 3), dtype=np.int64),
            depths=np.zeros(0, dtype=np.int64),
            rotations=np.zeros((0, 4)), scales=np.zeros((0, 3)),
            sh_dc=np.zeros((0, 3)), sh_ac=np.zeros((0, 15, 3)),
            opacities=np.zeros(0), provenance=[],
        )
        vox = empty
    else:
        vox = _stage("voxelize", voxelize, cloud, config)
    blob, sections = encode_voxelized(vox, config, cloud.count)
    summary = {
        "n_source": cloud.count,
        "m_leaves": vox.count,
        "sections": {
            _section_name(kind): len(payload) for kind, payload in sections
        },
        "total_bytes": len(blob),
        "seconds": time.perf_counter() - start,
    }
    return blob, summary


def _section_name(kind):
    return {
        SECTION_GEOMETRY: "geometry",
        attrcodec.SECTION_SH: "sh",
        attrcodec.SECTION_OPACITY: "opacity",
        attrcodec.SECTION_COV_LOSSLESS: "covariance-lossless",
        attrcodec.SECTION_COV_VQ: "covariance-vq",
    }.get(kind, "kind-%d" % kind)


def parse_header(blob):
    """Header fields and the validated section table."""
    if len(blob) < _HEADER.size:
        raise BitstreamError("container shorter than its header")
    fields = _HEADER.unpack_from(blob, 0)
    (magic, version, vox_mode, j_low, j_high, cov_mode, flags,
     ox, oy, oz, side, q_dc, q_ac, q_op, k_rot, k_scale, seed,
     n_source, m_leaves, n_sections) = fields
    if magic != MAGIC:
        raise BitstreamError("bad magic; not a container file")
    if version != VERSION:
        raise BitstreamError("unsupported container version %d" % version)
    if vox_mode >= len(VOX_MODES) or cov_mode >= len(COV_MODES):
        raise BitstreamError("unknown mode byte in header")
    if not 1 <= j_low <= j_high <= 21:
        raise BitstreamError("implausible depth range in header")
    table_end = _HEADER.size + _TABLE_ENTRY.size * n_sections
    if len(blob) < table_end:
        raise BitstreamError("section table truncated")
    sections = []
    for i in range(n_sections):
        kind, offset, length = _TABLE_ENTRY.unpack_from(
            blob, _HEADER.size + i * _TABLE_ENTRY.size
        )
        if offset < table_end or offset + length > len(blob):
            raise BitstreamError("section %d outside the file" % i)
        sections.append((kind, offset, length))
    spans = sorted((off, off + ln) for _, off, ln in sections)
    for (_, prev_end), (nxt, _) in zip(spans, spans[1:]):
        if nxt < prev_end:
            raise BitstreamError("section payloads overlap")
    header = {
        "version": version,
        "mode": VOX_MODES[vox_mode],
        "j_low": j_low,
        "j_high": j_high,
        "cov_mode": COV_MODES[cov_mode],
        "flags": flags,
        "origin": np.array([ox, oy, oz]),
        "side": side,
        "q_dc": q_dc,
        "q_ac": q_ac,
        "q_op": q_op,
        "k_rot": k_rot,
        "k_scale": k_scale,
        "seed": seed,
        "n_source": n_source,
        "m_leaves": m_leaves,
    }
    return header, sections


def info(blob):
    """Header plus per-section byte counts, for display."""
    header, sections = parse_header(blob)
    header["sections"] = [
        {"kind": _section_name(kind), "offset": off, "bytes": length}
        for kind, off, length in sections
    ]
    return header


def _find_section(blob, sections, kind):
    for k, off, length in sections:
        if k == kind:
            return blob[off : off + length]
    return None


def decode(blob):
    """Container bytes back to a GaussianCloud."""
    header, sections = parse_header(blob)
    if header["m_leaves"] == 0:
        return GaussianCloud.empty(0)
    geom = _find_section(blob, sections, SECTION_GEOMETRY)
    if geom is None:
        raise BitstreamError("container is missing the geometry section")
    tree = _stage("geometry", octree.decode_geometry, geom)
    coords, depths = tree.leaves()
    m = coords.shape[0]
    if m != header["m_leaves"]:
        raise BitstreamError(
            "geometry decodes %d leaves, header says %d"
            % (m, header["m_leaves"])
        )
    plan = _stage("transform-plan", RahtPlan, coords, header["j_high"])
    sh = _find_section(blob, sections, attrcodec.SECTION_SH)
    op = _find_section(blob, sections, attrcodec.SECTION_OPACITY)
    if sh is None or op is None:
        raise BitstreamError("container is missing attribute sections")
    sh_dc, sh_ac = _stage("sh", attrcodec.decode_sh, sh, plan)
    opacities = _stage("opacity", attrcodec.decode_opacity, op, plan)
    if header["cov_mode"] == "lossless":
        cov = _find_section(blob, sections, attrcodec.SECTION_COV_LOSSLESS)
        if cov is None:
            raise BitstreamError("container is missing the covariance "
                                 "section")
        rot, scales = _stage(
            "covariance", attrcodec.decode_covariance_lossless, cov, m
        )
    else:
        cov = _find_section(blob, sections, attrcodec.SECTION_COV_VQ)
        if cov is None:
            raise BitstreamError("container is missing the covariance "
                                 "section")
        rot, scales = _stage(
            "covariance", attrcodec.decode_covariance_vq, cov, m
        )
    vox = voxel.VoxelizedCloud(
        cube=voxel.BoundingCube(origin=header["origin"],
                                side=header["side"]),
        j_high=header["j_high"],
        coords=coords, depths=depths,
        rotations=canonical_quaternion(rot),
        scales=scales, sh_dc=sh_dc, sh_ac=sh_ac, opacities=opacities,
        provenance=[],
    ).validate()
    return vox.to_cloud()


def reencode_attributes(vox, config, n_source, q_ac, q_dc=None, q_op=None):
    """One sweep grid point: same geometry, different quantization."""
    point = replace(config, q_ac=q_ac, q_dc=q_dc, q_op=q_op)
    blob, _ = encode_voxelized(vox, point, n_source)
    return blob
