"""Pruned occupancy octrees over voxelized clouds, and their bitstream.

The tree is stored breadth-first: one occupancy byte per internal node
(child c occupied iff bit (x<<2|y<<1|z) is set), plus one leaf-flag bit per
occupied cell at the depths where a cell could be either a leaf or an
internal node. Both streams go through the adaptive arithmetic coder; the
payload is framed with explicit stream lengths so it can be embedded in a
larger container.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import entropy
from ._bitio import BitstreamError
from ._morton import morton3, unmorton3

MODE_UNIFORM = 0
MODE_ADAPTIVE = 1

_HEADER = struct.Struct("<BBBI")
_U32 = struct.Struct("<I")


@dataclass
class Octree:
    """Breadth-first pruned octree.

    occupancy holds internal-node bytes level by level, nodes within a
    level in Morton order. leaf_flags holds one byte (0/1) per occupied
    cell at depths [j_low, max_depth - 1], same traversal order; it is
    empty in uniform mode, where only depth-max_depth cells are leaves.
    """

    max_depth: int
    mode: int
    j_low: int
    occupancy: np.ndarray
    leaf_flags: np.ndarray

    @property
    def node_count(self):
        return int(self.occupancy.size)

    def leaves(self):
        """Decode (coords, depths) in canonical Morton order.

        coords are center representatives on the 2^max_depth grid, the
        same convention VoxelizedCloud uses.
        """
        occ = self.occupancy.astype(np.int64)
        flags = self.leaf_flags.astype(np.int64)
        occ_pos = 0
        flag_pos = 0
        leaf_codes = []
        leaf_depths = []
        nodes = np.zeros(1, dtype=np.int64) if occ.size else \
            np.zeros(0, dtype=np.int64)
        depth = 0
        while nodes.size:
            if occ_pos + nodes.size > occ.size:
                raise BitstreamError("occupancy stream exhausted mid-level")
            bytes_here = occ[occ_pos : occ_pos + nodes.size]
            occ_pos += nodes.size
            mask = ((bytes_here[:, None] >> np.arange(8)) & 1).astype(bool)
            children = (nodes[:, None] * 8 + np.arange(8))[mask]
            depth += 1
            if depth == self.max_depth:
                leaf_codes.append(children)
                leaf_depths.append(np.full(children.size, depth))
                break
            if self.mode == MODE_ADAPTIVE and depth >= self.j_low:
                if flag_pos + children.size > flags.size:
                    raise BitstreamError("leaf-flag stream exhausted")
                here = flags[flag_pos : flag_pos + children.size]
                flag_pos += children.size
                is_leaf = here == 1
                leaf_codes.append(children[is_leaf])
                leaf_depths.append(np.full(int(is_leaf.sum()), depth))
                nodes = children[~is_leaf]
            else:
                nodes = children
        if occ_pos != occ.size:
            raise BitstreamError("trailing bytes in occupancy stream")
        if flag_pos != flags.size:
            raise BitstreamError("trailing bits in leaf-flag stream")
        if not leaf_codes:
            return np.zeros((0, 3), dtype=np.int64), \
                np.zeros(0, dtype=np.int64)
        codes = np.concatenate(leaf_codes)
        depths = np.concatenate(leaf_depths).astype(np.int64)
        starts = codes << (3 * (self.max_depth - depths))
        order = np.argsort(starts, kind="stable")
        codes, depths = codes[order], depths[order]
        g = self.max_depth - depths
        coords = unmorton3(codes) << g[:, None]
        coords += np.where(g > 0, 1 << np.maximum(g - 1, 0), 0)[:, None]
        return coords, depths


def _start_codes(coords, depths, max_depth):
    g = (max_depth - np.asarray(depths, dtype=np.int64))
    parents = np.asarray(coords, dtype=np.int64) >> g[:, None]
    return morton3(parents) << (3 * g), g


def morton_order(coords, depths=None, max_depth=None):
    """Permutation sorting leaves into depth-first (Morton) order."""
    coords = np.asarray(coords, dtype=np.int64)
    if depths is None:
        return np.argsort(morton3(coords), kind="stable")
    starts, _ = _start_codes(coords, depths, max_depth)
    return np.argsort(starts, kind="stable")


def build_octree(vox):
    """Octree whose leaf set equals the voxelized cloud's leaves."""
    coords = np.asarray(vox.coords, dtype=np.int64)
    depths = np.asarray(vox.depths, dtype=np.int64)
    jh = int(vox.j_high)
    if coords.shape[0] == 0:
        return Octree(jh, MODE_UNIFORM, jh,
                      np.zeros(0, dtype=np.uint8),
                      np.zeros(0, dtype=np.uint8))
    starts, g = _start_codes(coords, depths, jh)
    order = np.argsort(starts, kind="stable")
    starts, g = starts[order], g[order]
    ends = starts + (1 << (3 * g))
    if starts.size > 1 and np.any(ends[:-1] > starts[1:]):
        raise ValueError("leaf voxels overlap")
    j_low = int(depths.min())
    adaptive = j_low < jh
    occ_levels = []
    flag_levels = []
    depths_s = depths[order]
    for t in range(jh):
        cells = np.unique(starts[depths_s >= t + 1] >> (3 * (jh - t - 1)))
        if cells.size == 0:
            break
        parents = cells >> 3
        bits = (1 << (cells & 7)).astype(np.uint8)
        bounds = np.flatnonzero(np.r_[True, parents[1:] != parents[:-1]])
        occ_levels.append(np.bitwise_or.reduceat(bits, bounds))
        if adaptive and j_low <= t + 1 < jh:
            leaf_here = np.unique(
                starts[depths_s == t + 1] >> (3 * (jh - t - 1))
            )
            is_leaf = np.isin(cells, leaf_here, assume_unique=True)
            flag_levels.append(is_leaf.astype(np.uint8))
    occupancy = np.concatenate(occ_levels) if occ_levels else \
        np.zeros(0, dtype=np.uint8)
    flags = np.concatenate(flag_levels) if flag_levels else \
        np.zeros(0, dtype=np.uint8)
    return Octree(
        max_depth=jh,
        mode=MODE_ADAPTIVE if adaptive else MODE_UNIFORM,
        j_low=j_low,
        occupancy=occupancy,
        leaf_flags=flags,
    )


def encode_geometry(tree):
    """Serialize a tree: header, entropy-coded occupancy, then flags."""
    coords, depths = tree.leaves()
    header = _HEADER.pack(
        tree.mode, tree.j_low, tree.max_depth, coords.shape[0]
    )
    occ_stream = entropy.ac_encode(
        tree.occupancy.astype(np.int64) - 1, 255
    )
    flag_stream = entropy.ac_encode(tree.leaf_flags.astype(np.int64), 2)
    return b"".join(
        [header, _U32.pack(len(occ_stream)), occ_stream,
         _U32.pack(len(flag_stream)), flag_stream]
    )


def decode_geometry(payload):
    """Inverse of encode_geometry; raises BitstreamError on bad input."""
    payload = bytes(payload)
    if len(payload) < _HEADER.size:
        raise BitstreamError("geometry payload shorter than its header")
    mode, j_low, max_depth, leaf_count = _HEADER.unpack_from(payload)
    if mode not in (MODE_UNIFORM, MODE_ADAPTIVE):
        raise BitstreamError("unknown geometry mode %d" % mode)
    if not 1 <= max_depth <= 21 or not 1 <= j_low <= max_depth:
        raise BitstreamError("implausible depth header")
    pos = _HEADER.size

    def take_stream():
        nonlocal pos
        if pos + 4 > len(payload):
            raise BitstreamError("stream length header truncated")
        (length,) = _U32.unpack_from(payload, pos)
        pos += 4
        if pos + length > len(payload):
            raise BitstreamError("stream extends past the payload")
        chunk = payload[pos : pos + length]
        pos += length
        return chunk

    occ_syms = entropy.ac_decode(take_stream(), 255)
    flag_syms = entropy.ac_decode(take_stream(), 2)
    if pos != len(payload):
        raise BitstreamError("trailing bytes after geometry streams")
    if leaf_count == 0 and occ_syms.size:
        raise BitstreamError("empty tree with non-empty occupancy")
    tree = Octree(
        max_depth=int(max_depth),
        mode=int(mode),
        j_low=int(j_low),
        occupancy=(occ_syms + 1).astype(np.uint8),
        leaf_flags=flag_syms.astype(np.uint8),
    )
    coords, _ = tree.leaves()
    if coords.shape[0] != leaf_count:
        raise BitstreamError(
            "decoded %d leaves, header declared %d"
            % (coords.shape[0], leaf_count)
        )
    return tree
