"""Uniform and adaptive voxelization of Gaussian clouds.

Voxelization snaps Gaussian means to an octree grid over the scene's
bounding cube and merges the Gaussians that land in the same cell. The
adaptive variant keeps coarse cells where the density is low and splits
cells that are crowded, spread out, or contain one of the largest-volume
Gaussians. A Wasserstein-based splitting criterion is available as a
slower reference mode.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._morton import MAX_BITS, morton3
from ._spd import check_psd, eigvals3, spd_inv_sqrt, spd_sqrt
from .model import GaussianCloud, covariance_from


@dataclass
class BoundingCube:
    """Axis-aligned cube [origin, origin + side)^3 enclosing the scene."""

    origin: np.ndarray
    side: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.side = float(self.side)
        if not self.side > 0:
            raise ValueError("cube side must be positive")


@dataclass
class AdaptiveParams:
    """Knobs for adaptive voxelization.

    j_low/j_high bound the leaf depths; the top v_percent of Gaussians by
    volume are pinned to depth j_high; voxels holding more than tau1
    Gaussians (or spread beyond half their size) are split. tau1 may be
    math.inf to disable the occupancy test.
    """

    j_low: int
    j_high: int
    v_percent: float = 1.0
    tau1: float = 4

    def __post_init__(self):
        if not 1 <= self.j_low <= self.j_high <= MAX_BITS:
            raise ValueError(
                "need 1 <= j_low <= j_high <= %d" % MAX_BITS
            )
        if not 0 <= self.v_percent <= 100:
            raise ValueError("v_percent must be in [0, 100]")
        if not self.tau1 >= 0:
            raise ValueError("tau1 must be nonnegative")


@dataclass
class VoxelizedCloud:
    """Merged Gaussians on an octree grid, in Morton order.

    coords holds the grid coordinate of each leaf at 2^j_high resolution;
    a leaf of depth d < j_high stores the center-representative cell
    c_d * 2^(j_high-d) + 2^(j_high-d-1), which makes the depth recoverable
    from the trailing bit pattern. provenance[i] lists the source-Gaussian
    indices merged into leaf i.
    """

    cube: BoundingCube
    j_high: int
    coords: np.ndarray
    depths: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    sh_dc: np.ndarray
    sh_ac: np.ndarray
    opacities: np.ndarray
    provenance: list = field(repr=False)

    @property
    def count(self):
        return self.coords.shape[0]

    def centers(self):
        """World-space centers of the leaf voxels at their own depth."""
        g = self.j_high - self.depths
        parent = self.coords >> g[:, None]
        size = self.cube.side / np.power(2.0, self.depths)
        return self.cube.origin + (parent + 0.5) * size[:, None]

    def to_cloud(self):
        """The merged cloud with means snapped to voxel centers."""
        return GaussianCloud(
            positions=self.centers(),
            rotations=self.rotations,
            scales=self.scales,
            sh_dc=self.sh_dc,
            sh_ac=self.sh_ac,
            opacities=self.opacities,
        )

    def validate(self, n_source=None):
        """Check coordinate patterns, non-overlap, and the partition."""
        g = (self.j_high - self.depths).astype(np.int64)
        want = np.where(g > 0, 1 << np.maximum(g - 1, 0), 0)
        if np.any((self.coords & ((1 << g) - 1)[:, None]) != want[:, None]):
            raise ValueError("leaf coordinate is not a center representative")
        lo = morton3(self.coords >> g[:, None]) << (3 * g)
        hi = lo + (1 << (3 * g))
        order = np.argsort(lo, kind="stable")
        if np.any(hi[order][:-1] > lo[order][1:]):
            raise ValueError("leaf voxels overlap")
        if n_source is not None:
            flat = np.concatenate([np.asarray(p) for p in self.provenance]) \
                if self.provenance else np.array([], dtype=np.int64)
            if not np.array_equal(np.sort(flat), np.arange(n_source)):
                raise ValueError("provenance does not partition the sources")
        return self


def bounding_cube(cloud):
    """Tight cube around the positions, padded so points fall inside."""
    pos = cloud.positions if hasattr(cloud, "positions") else \
        np.asarray(cloud, dtype=np.float64)
    if pos.size == 0:
        raise ValueError("cannot bound an empty cloud")
    lo = pos.min(axis=0)
    extent = float((pos.max(axis=0) - lo).max())
    if extent > 0:
        side = extent * (1.0 + 1e-6)
    else:
        side = max(1.0, float(np.abs(pos).max())) * 1e-6
    return BoundingCube(origin=lo, side=side)


def gaussian_volume(s):
    """Volume proxy s_x * s_y * s_z; componentwise positive required."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0):
        raise ValueError("scale components must be positive")
    return np.prod(s, axis=-1)


def w2_distance(g1, g2):
    """Squared 2-Wasserstein distance between two Gaussians (mean, cov)."""
    mu1, c1 = g1
    mu2, c2 = g2
    c1 = check_psd(c1, "first covariance")
    c2 = check_psd(c2, "second covariance")
    dmu = np.asarray(mu1, dtype=np.float64) - np.asarray(mu2, np.float64)
    s1 = spd_sqrt(c1)
    m = s1 @ c2 @ s1
    lam = np.maximum(eigvals3(0.5 * (m + m.T)), 0.0)
    d = float(dmu @ dmu) + np.trace(c1) + np.trace(c2) \
        - 2.0 * np.sqrt(lam).sum()
    return max(float(d), 0.0)


def w2_barycenter(gaussians, tol=1e-8, max_iter=100):
    """Wasserstein barycenter of equally weighted Gaussians.

    The mean is the arithmetic average; the covariance comes from the
    stabilized fixed-point iteration, started at the arithmetic mean of
    the covariances. Warns (and returns the last iterate) if the fixed
    point has not settled after max_iter rounds.
    """
    if len(gaussians) == 0:
        raise ValueError("barycenter of an empty set is undefined")
    means = np.stack(
        [np.asarray(m, dtype=np.float64) for m, _ in gaussians]
    )
    covs = [check_psd(c, "covariance") for _, c in gaussians]
    mean = means.mean(axis=0)
    if len(covs) == 1:
        return mean, covs[0]
    k = len(covs)
    cur = np.mean(covs, axis=0)
    for _ in range(max_iter):
        s = spd_sqrt(cur)
        si = spd_inv_sqrt(cur)
        t = sum(spd_sqrt(s @ c @ s) for c in covs) / k
        nxt = si @ t @ t @ si
        nxt = 0.5 * (nxt + nxt.T)
        done = np.linalg.norm(nxt - cur) < tol
        cur = nxt
        if done:
            break
    else:
        warnings.warn(
            "barycenter fixed point did not converge in %d iterations"
            % max_iter,
            RuntimeWarning,
        )
    return mean, cur


def voxel_cost(gaussians, g_star):
    """Total squared W2 distance from the members to a representative."""
    return sum(w2_distance(g, g_star) for g in gaussians)


def recolor_init(cloud, members):
    """Merged attributes for one voxel.

    Color and opacity average over the members; rotation and scale are
    copied from the largest-volume member (ties: lowest index).
    Returns (rotation, scale, sh_dc, sh_ac, opacity).
    """
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("a voxel needs at least one member")
    vols = gaussian_volume(cloud.scales[members])
    best = members[np.lexsort((members, -vols))[0]]
    return (
        cloud.rotations[best].copy(),
        cloud.scales[best].copy(),
        cloud.sh_dc[members].mean(axis=0),
        cloud.sh_ac[members].mean(axis=0),
        float(cloud.opacities[members].mean()),
    )


def _grid_coords(positions, cube, j):
    cell = cube.side / (1 << j)
    idx = np.floor((positions - cube.origin) / cell).astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << j)):
        raise ValueError("position outside the bounding cube")
    return idx


def _merge_groups(cloud, cube, j_high, coords, depths, groups):
    """Assemble a VoxelizedCloud from per-leaf member index groups."""
    m = len(groups)
    sizes = np.array([len(g) for g in groups], dtype=np.int64)
    flat = np.concatenate(groups) if m else np.array([], dtype=np.int64)
    starts = np.zeros(m, dtype=np.int64)
    if m:
        starts[1:] = np.cumsum(sizes)[:-1]
    vols = gaussian_volume(cloud.scales) if cloud.count else \
        np.zeros(0)
    gid = np.repeat(np.arange(m), sizes)
    pick_order = np.lexsort((flat, -vols[flat], gid))
    best = flat[pick_order[starts]] if m else flat
    sh_dc = np.add.reduceat(cloud.sh_dc[flat], starts, axis=0) \
        / sizes[:, None] if m else np.zeros((0, 3))
    sh_ac = (
        np.add.reduceat(cloud.sh_ac[flat].reshape(-1, 45), starts, axis=0)
        / sizes[:, None]
    ).reshape(m, 15, 3) if m else np.zeros((0, 15, 3))
    opac = np.add.reduceat(cloud.opacities[flat], starts) / sizes if m \
        else np.zeros(0)
    vox = VoxelizedCloud(
        cube=cube,
        j_high=int(j_high),
        coords=coords.astype(np.int64),
        depths=np.asarray(depths, dtype=np.int64),
        rotations=cloud.rotations[best],
        scales=cloud.scales[best],
        sh_dc=sh_dc,
        sh_ac=sh_ac,
        opacities=opac,
        provenance=[np.sort(g) for g in groups],
    )
    # canonical Morton order over the j_high grid
    order = np.argsort(morton3(vox.coords), kind="stable")
    vox.coords = vox.coords[order]
    vox.depths = vox.depths[order]
    vox.rotations = vox.rotations[order]
    vox.scales = vox.scales[order]
    vox.sh_dc = vox.sh_dc[order]
    vox.sh_ac = vox.sh_ac[order]
    vox.opacities = vox.opacities[order]
    vox.provenance = [vox.provenance[i] for i in order]
    return vox


def uniform_voxelize(cloud, j, cube=None):
    """Snap every Gaussian to the depth-j grid and merge per cell."""
    j = int(j)
    if not 1 <= j <= MAX_BITS:
        raise ValueError("depth must be in [1, %d]" % MAX_BITS)
    if cube is None:
        cube = bounding_cube(cloud)
    idx = _grid_coords(cloud.positions, cube, j)
    codes = morton3(idx)
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
    groups = np.split(order, starts[1:])
    coords = idx[order[starts]]
    depths = np.full(len(groups), j, dtype=np.int64)
    return _merge_groups(cloud, cube, j, coords, depths, groups)


def _leaf_coords(first_idx, depth, j_high):
    """Center-representative cell of the depth-d voxel holding first_idx."""
    g = j_high - depth
    if g == 0:
        return first_idx
    return ((first_idx >> g) << g) + (1 << (g - 1))


def adaptive_voxelize(cloud, params, cube=None, criterion="fast"):
    """Mixed-depth voxelization driven by density, spread, and volume.

    criterion "fast" splits on member count vs tau1 and mean distance to
    the voxel center vs half the voxel size; "w2" is the reference mode
    that splits when a member's Wasserstein distance to the voxel's
    barycenter exceeds that same radius.
    """
    if criterion not in ("fast", "w2"):
        raise ValueError("criterion must be 'fast' or 'w2'")
    if cube is None:
        cube = bounding_cube(cloud)
    jh, jl = params.j_high, params.j_low
    idx = _grid_coords(cloud.positions, cube, jh)
    codes = morton3(idx)
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    pos_s = cloud.positions[order]
    n = cloud.count
    pinned_s = np.zeros(n, dtype=bool)
    k = int(math.ceil(n * params.v_percent / 100.0))
    if k > 0:
        vols = gaussian_volume(cloud.scales)
        thresh = np.partition(vols, n - k)[n - k]
        pinned_s = (vols >= thresh)[order]
    covs_s = None
    if criterion == "w2":
        covs_s = covariance_from(cloud.rotations, cloud.scales)[order]

    leaf_spans = []
    stack = [(0, n, 0)]
    while stack:
        s, e, d = stack.pop()
        if d >= jh:
            leaf_spans.append((s, e, d))
            continue
        if d < jl:
            split = True
        elif pinned_s[s:e].any():
            split = True
        elif (e - s) > params.tau1:
            split = True
        else:
            parent = idx[order[s]] >> (jh - d)
            center = cube.origin + (parent + 0.5) * cube.side / (1 << d)
            tau2 = cube.side / (1 << (d + 1))
            if criterion == "fast":
                spread = np.linalg.norm(pos_s[s:e] - center, axis=1).mean()
                split = spread > tau2
            else:
                members = [(pos_s[i], covs_s[i]) for i in range(s, e)]
                g_star = w2_barycenter(members)
                split = max(w2_distance(g, g_star) for g in members) \
                    > tau2 * tau2
        if split:
            shift = 3 * (jh - d - 1)
            child = sc[s:e] >> shift
            base = (int(sc[s]) >> (shift + 3)) << 3
            bounds = s + np.searchsorted(
                child, np.arange(base, base + 9)
            )
            for c in range(8):
                if bounds[c + 1] > bounds[c]:
                    stack.append((int(bounds[c]), int(bounds[c + 1]), d + 1))
        else:
            leaf_spans.append((s, e, d))

    m = len(leaf_spans)
    coords = np.zeros((m, 3), dtype=np.int64)
    depths = np.zeros(m, dtype=np.int64)
    groups = []
    for i, (s, e, d) in enumerate(leaf_spans):
        coords[i] = _leaf_coords(idx[order[s]], d, jh)
        depths[i] = d
        groups.append(order[s:e])
    return _merge_groups(cloud, cube, jh, coords, depths, groups)
