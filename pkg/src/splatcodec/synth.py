"""Seeded synthetic scene: clustered small Gaussians plus dispersed
large ones, the density contrast the adaptive voxelizer exploits.
Everything derives from one RNG seed so tests are hermetic."""

import numpy as np

from .model import GaussianCloud, canonical_quaternion

_SH_C0 = 0.28209479177387814


def make_synthetic_scene(n_small=9500, n_large=500, clusters=60, seed=0):
    """Cloud of n_small clustered + n_large dispersed Gaussians.

    Small Gaussians gather around cluster centers (sigma 0.01) with
    per-axis scales U(0.004, 0.012); large ones spread over the whole
    box with scales U(0.05, 0.15). Volumes separate cleanly, so pinning
    the top few percent by volume captures exactly the large population.
    """
    if n_small < 0 or n_large < 0 or clusters < 1:
        raise ValueError("counts must be nonnegative, clusters >= 1")
    rng = np.random.default_rng(seed)
    n = n_small + n_large
    cloud = GaussianCloud.empty(n)

    centers = rng.uniform(-0.9, 0.9, size=(clusters, 3))
    palette = rng.uniform(0.15, 0.85, size=(clusters, 3))
    assign = rng.integers(0, clusters, size=n_small)
    cloud.positions[:n_small] = centers[assign] \
        + rng.normal(0.0, 0.01, size=(n_small, 3))
    cloud.scales[:n_small] = rng.uniform(0.004, 0.012, size=(n_small, 3))
    cloud.opacities[:n_small] = rng.uniform(0.35, 0.95, size=n_small)
    small_rgb = np.clip(
        palette[assign] + rng.normal(0.0, 0.05, size=(n_small, 3)),
        0.05, 0.95,
    )
    cloud.sh_dc[:n_small] = (small_rgb - 0.5) / _SH_C0

    cloud.positions[n_small:] = rng.uniform(-0.95, 0.95,
                                            size=(n_large, 3))
    cloud.scales[n_small:] = rng.uniform(0.05, 0.15, size=(n_large, 3))
    cloud.opacities[n_small:] = rng.uniform(0.6, 0.95, size=n_large)
    large_rgb = rng.uniform(0.1, 0.9, size=(n_large, 3))
    cloud.sh_dc[n_small:] = (large_rgb - 0.5) / _SH_C0

    quats = rng.normal(size=(n, 4))
    cloud.rotations[:] = canonical_quaternion(quats)
    cloud.sh_ac[:] = rng.normal(0.0, 0.02, size=(n, 15, 3))
    return cloud
