"""Tests for octree construction and the lossless geometry bitstream."""

from types import SimpleNamespace

import numpy as np
import pytest

from splatcodec._bitio import BitstreamError
from splatcodec.model import GaussianCloud
from splatcodec.octree import (
    MODE_ADAPTIVE,
    MODE_UNIFORM,
    build_octree,
    decode_geometry,
    encode_geometry,
    morton_order,
)
from splatcodec.voxel import (
    AdaptiveParams,
    BoundingCube,
    adaptive_voxelize,
    uniform_voxelize,
)


def _vox(coords, depths, j_high):
    return SimpleNamespace(
        coords=np.asarray(coords, dtype=np.int64),
        depths=np.asarray(depths, dtype=np.int64),
        j_high=j_high,
    )


def _cloud(positions):
    n = len(positions)
    return GaussianCloud(
        positions=np.asarray(positions, dtype=np.float64),
        rotations=np.tile([1.0, 0, 0, 0], (n, 1)),
        scales=np.full((n, 3), 0.01),
        sh_dc=np.zeros((n, 3)),
        sh_ac=np.zeros((n, 15, 3)),
        opacities=np.full(n, 0.5),
    )


def _random_vox(rng, n, j_high, adaptive=False):
    cloud = _cloud(rng.uniform(size=(n, 3)))
    cube = BoundingCube(np.zeros(3), 1.0 + 1e-9)
    if adaptive:
        params = AdaptiveParams(j_low=1, j_high=j_high, v_percent=0.0,
                                tau1=2)
        return adaptive_voxelize(cloud, params, cube=cube)
    return uniform_voxelize(cloud, j_high, cube=cube)


def test_single_leaf_node_list():
    tree = build_octree(_vox([[0, 0, 0]], [2], 2))
    assert tree.mode == MODE_UNIFORM
    assert tree.occupancy.tolist() == [0x01, 0x01]
    assert tree.leaf_flags.size == 0
    coords, depths = tree.leaves()
    assert coords.tolist() == [[0, 0, 0]]
    assert depths.tolist() == [2]


def test_full_grid_all_ff():
    side = np.arange(4)
    grid = np.stack(np.meshgrid(side, side, side, indexing="ij"),
                    axis=-1).reshape(-1, 3)
    tree = build_octree(_vox(grid, np.full(64, 2), 2))
    assert np.all(tree.occupancy == 0xFF)
    assert tree.node_count == 1 + 8


def test_leaves_match_voxelized_cloud():
    rng = np.random.default_rng(0)
    for adaptive in (False, True):
        vox = _random_vox(rng, 500, 5, adaptive=adaptive)
        tree = build_octree(vox)
        coords, depths = tree.leaves()
        assert np.array_equal(coords, vox.coords)
        assert np.array_equal(depths, vox.depths)


def test_overlapping_leaves_rejected():
    # depth-1 leaf (center representative (1,1,1)) contains cell (0,0,0)
    bad = _vox([[1, 1, 1], [0, 0, 0]], [1, 2], 2)
    with pytest.raises(ValueError, match="overlap"):
        build_octree(bad)


def test_empty_tree_round_trip():
    tree = build_octree(_vox(np.zeros((0, 3)), np.zeros(0), 4))
    payload = encode_geometry(tree)
    back = decode_geometry(payload)
    coords, depths = back.leaves()
    assert coords.shape == (0, 3)
    assert depths.size == 0


def test_uniform_tree_codes_no_flags():
    rng = np.random.default_rng(1)
    vox = _random_vox(rng, 300, 4)
    tree = build_octree(vox)
    assert tree.mode == MODE_UNIFORM
    assert tree.leaf_flags.size == 0
    back = decode_geometry(encode_geometry(tree))
    assert np.array_equal(back.occupancy, tree.occupancy)
    assert back.leaf_flags.size == 0


@pytest.mark.parametrize("adaptive", [False, True])
def test_geometry_round_trip(adaptive):
    rng = np.random.default_rng(2)
    for n in (1, 17, 400, 3000):
        vox = _random_vox(rng, n, 6, adaptive=adaptive)
        tree = build_octree(vox)
        back = decode_geometry(encode_geometry(tree))
        assert back.mode == tree.mode
        assert back.max_depth == tree.max_depth
        assert np.array_equal(back.occupancy, tree.occupancy)
        assert np.array_equal(back.leaf_flags, tree.leaf_flags)
        coords, depths = back.leaves()
        assert np.array_equal(coords, vox.coords)
        assert np.array_equal(depths, vox.depths)


def test_shallow_adaptive_tree_round_trip():
    # all leaves stop well above max_depth
    vox = _vox([[2, 2, 2], [2, 2, 10], [10, 2, 2]], [2, 2, 2], 4)
    tree = build_octree(vox)
    assert tree.mode == MODE_ADAPTIVE
    back = decode_geometry(encode_geometry(tree))
    coords, depths = back.leaves()
    assert np.array_equal(coords, vox.coords)
    assert np.array_equal(depths, vox.depths)


def test_adaptive_tree_is_pruning_of_uniform():
    rng = np.random.default_rng(3)
    cloud = _cloud(rng.uniform(size=(800, 3)))
    cube = BoundingCube(np.zeros(3), 1.0 + 1e-9)
    uni = build_octree(uniform_voxelize(cloud, 6, cube=cube))
    ada = build_octree(
        adaptive_voxelize(
            cloud, AdaptiveParams(j_low=2, j_high=6, v_percent=0.0, tau1=4),
            cube=cube,
        )
    )
    assert ada.node_count <= uni.node_count


def test_compressed_size_within_raw_bound():
    rng = np.random.default_rng(4)
    vox = _random_vox(rng, 2000, 7, adaptive=True)
    tree = build_octree(vox)
    payload = encode_geometry(tree)
    raw = tree.node_count + (tree.leaf_flags.size + 7) // 8
    assert len(payload) <= raw + 64 + 15  # header + frames + termination


def test_morton_order_examples():
    perm = morton_order(np.array([[1, 0, 0], [0, 0, 0]]))
    assert perm.tolist() == [1, 0]
    assert morton_order(np.array([[3, 1, 2]])).tolist() == [0]


def test_morton_order_mixed_depths_matches_tree():
    rng = np.random.default_rng(5)
    vox = _random_vox(rng, 400, 5, adaptive=True)
    perm = morton_order(vox.coords, vox.depths, vox.j_high)
    assert np.array_equal(perm, np.arange(vox.count))  # already canonical


def test_decode_rejects_malformed_payloads():
    rng = np.random.default_rng(6)
    vox = _random_vox(rng, 100, 4, adaptive=True)
    payload = encode_geometry(build_octree(vox))
    with pytest.raises(BitstreamError):
        decode_geometry(payload[:3])
    with pytest.raises(BitstreamError):
        decode_geometry(payload[: len(payload) - 5])
    with pytest.raises(BitstreamError):
        decode_geometry(payload + b"\x00")
    bad_mode = bytes([7]) + payload[1:]
    with pytest.raises(BitstreamError):
        decode_geometry(bad_mode)
    bad_depth = payload[:2] + bytes([0]) + payload[3:]
    with pytest.raises(BitstreamError):
        decode_geometry(bad_depth)


def test_decode_survives_random_corruption():
    rng = np.random.default_rng(7)
    vox = _random_vox(rng, 150, 5, adaptive=True)
    payload = bytearray(encode_geometry(build_octree(vox)))
    for _ in range(50):
        corrupted = bytearray(payload)
        for _ in range(3):
            corrupted[rng.integers(0, len(corrupted))] = rng.integers(0, 256)
        try:
            tree = decode_geometry(bytes(corrupted))
            tree.leaves()
        except (BitstreamError, ValueError):
            pass  # rejection is fine; crashing or hanging is not
