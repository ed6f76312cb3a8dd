"""Deterministic CPU splatting renderer.

Gaussians are projected through a pinhole camera, sorted globally by
depth, and alpha-composited front to back with an elliptical footprint
cutoff. Determinism is absolute: the global sort fixes compositing
order, so the row-parallel rasterizer produces bit-identical images for
any thread count.

Camera files are plain text, one camera per line, 18 numbers:
9 row-major rotation entries and 3 translation entries of the
world-to-camera transform (x_cam = R x_world + t), then fx fy cx cy in
pixels, then width height. Blank lines and '#' comments are skipped.
"""

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .model import covariance_from

NEAR_PLANE = 0.01
FOOTPRINT_INFLATION = 0.3
MAX_ALPHA = 0.99
MIN_TRANSMITTANCE = 1e-4
CUTOFF_SQ = 9.0

_SH_C0 = 0.28209479177387814
_SH_C1 = 0.4886025119029199
_SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
          -1.0925484305920792, 0.5462742152960396)
_SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
          0.3731763325901154, -0.4570457994644658, 1.445305721320277,
          -0.5900435899266435)


@dataclass
class Camera:
    """Pinhole camera; rotation/translation map world to camera space."""

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if self.translation.shape != (3,):
            raise ValueError("translation must have 3 entries")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError("rotation must be orthonormal")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")

    @property
    def center(self):
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass
class Image:
    """Float RGB raster in [0, 1], shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("pixels must have shape (h, w, 3)")

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera rotation/translation looking from eye to target.

    Rows are (right, image-y, forward); always a proper rotation. Image
    vertical orientation is irrelevant to the symmetric metrics used
    downstream.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    nf = np.linalg.norm(forward)
    if nf < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / nf
    right = np.cross(np.asarray(up, dtype=np.float64), forward)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise ValueError("up direction parallel to view direction")
    right = right / nr
    rotation = np.stack([right, np.cross(forward, right), forward])
    return rotation, -rotation @ eye


def load_cameras(path):
    """Parse the one-camera-per-line text format."""
    cameras = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 18:
                raise ValueError(
                    "camera line %d has %d fields, expected 18"
                    % (lineno, len(parts))
                )
            vals = [float(p) for p in parts]
            cameras.append(Camera(
                rotation=np.array(vals[:9]).reshape(3, 3),
                translation=np.array(vals[9:12]),
                fx=vals[12], fy=vals[13], cx=vals[14], cy=vals[15],
                width=int(round(vals[16])), height=int(round(vals[17])),
            ))
    return cameras


def save_cameras(cameras, path):
    """Write the format load_cameras reads."""
    with open(path, "w", encoding="ascii") as fh:
        for cam in cameras:
            nums = list(cam.rotation.ravel()) + list(cam.translation)
            nums += [cam.fx, cam.fy, cam.cx, cam.cy]
            fields = ["%.17g" % v for v in nums]
            fields += [str(cam.width), str(cam.height)]
            fh.write(" ".join(fields) + "\n")


def eval_sh(directions, sh_dc, sh_ac):
    """View-dependent color from degree 0-3 real spherical harmonics.

    Returns 0.5 + C0*dc + higher bands, unclamped; the compositor clamps
    the final pixel instead.
    """
    d = np.asarray(directions, dtype=np.float64)
    dc = np.asarray(sh_dc, dtype=np.float64)
    ac = np.asarray(sh_ac, dtype=np.float64)
    single = d.ndim == 1
    if single:
        d, dc, ac = d[None], dc[None], ac[None]
    x, y, z = d[:, 0:1], d[:, 1:2], d[:, 2:3]
    rgb = 0.5 + _SH_C0 * dc
    rgb = rgb - _SH_C1 * y * ac[:, 0] + _SH_C1 * z * ac[:, 1] \
        - _SH_C1 * x * ac[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    rgb = rgb + _SH_C2[0] * xy * ac[:, 3] + _SH_C2[1] * yz * ac[:, 4] \
        + _SH_C2[2] * (2.0 * zz - xx - yy) * ac[:, 5] \
        + _SH_C2[3] * xz * ac[:, 6] + _SH_C2[4] * (xx - yy) * ac[:, 7]
    rgb = rgb + _SH_C3[0] * y * (3.0 * xx - yy) * ac[:, 8] \
        + _SH_C3[1] * xy * z * ac[:, 9] \
        + _SH_C3[2] * y * (4.0 * zz - xx - yy) * ac[:, 10] \
        + _SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * ac[:, 11] \
        + _SH_C3[4] * x * (4.0 * zz - xx - yy) * ac[:, 12] \
        + _SH_C3[5] * z * (xx - yy) * ac[:, 13] \
        + _SH_C3[6] * x * (xx - 3.0 * yy) * ac[:, 14]
    return rgb[0] if single else rgb


def project_gaussian(camera, mean, covariance):
    """Perspective splat of one Gaussian.

    Returns (mean2d, cov2d, depth), or None when the point sits behind
    the near plane. cov2d includes the anti-aliasing inflation.
    """
    p = camera.rotation @ np.asarray(mean, dtype=np.float64) \
        + camera.translation
    depth = p[2]
    if depth <= NEAR_PLANE:
        return None
    mean2d = np.array([
        camera.fx * p[0] / depth + camera.cx,
        camera.fy * p[1] / depth + camera.cy,
    ])
    jac = np.array([
        [camera.fx / depth, 0.0, -camera.fx * p[0] / depth ** 2],
        [0.0, camera.fy / depth, -camera.fy * p[1] / depth ** 2],
    ])
    jw = jac @ camera.rotation
    cov2d = jw @ np.asarray(covariance, dtype=np.float64) @ jw.T
    cov2d = 0.5 * (cov2d + cov2d.T) + FOOTPRINT_INFLATION * np.eye(2)
    return mean2d, cov2d, depth


def _project_all(cloud, camera):
    """Vectorized projection; returns splat arrays in depth order."""
    p = cloud.positions @ camera.rotation.T + camera.translation
    depth = p[:, 2]
    keep = depth > NEAR_PLANE
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return None
    p = p[idx]
    z = depth[idx]
    mean2d = np.stack([
        camera.fx * p[:, 0] / z + camera.cx,
        camera.fy * p[:, 1] / z + camera.cy,
    ], axis=1)
    jac = np.zeros((idx.size, 2, 3))
    jac[:, 0, 0] = camera.fx / z
    jac[:, 0, 2] = -camera.fx * p[:, 0] / z ** 2
    jac[:, 1, 1] = camera.fy / z
    jac[:, 1, 2] = -camera.fy * p[:, 1] / z ** 2
    jw = jac @ camera.rotation
    sigma = covariance_from(cloud.rotations[idx], cloud.scales[idx])
    cov2d = np.einsum("nij,njk,nlk->nil", jw, sigma, jw)
    cov2d[:, 0, 0] += FOOTPRINT_INFLATION
    cov2d[:, 1, 1] += FOOTPRINT_INFLATION
    dirs = cloud.positions[idx] - camera.center
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / np.maximum(norms, 1e-12)
    colors = eval_sh(dirs, cloud.sh_dc[idx], cloud.sh_ac[idx])
    order = np.argsort(z, kind="stable")
    return (mean2d[order], cov2d[order], colors[order],
            cloud.opacities[idx][order])


def _composite_rows(y0, y1, width, splats, background, out):
    mean2d, inv_a, inv_b, inv_c, colors, alphas_base, x0, x1, y0s, y1s \
        = splats
    xs = np.arange(width) + 0.5
    for y in range(y0, y1):
        py = y + 0.5
        acc = np.zeros((width, 3))
        trans = np.ones(width)
        cand = np.flatnonzero((y0s <= y) & (y <= y1s))
        for g in cand:
            lo, hi = x0[g], x1[g] + 1
            tseg = trans[lo:hi]
            if tseg.size == 0 or tseg.max() < MIN_TRANSMITTANCE:
                continue
            dx = xs[lo:hi] - mean2d[g, 0]
            dy = py - mean2d[g, 1]
            q = inv_a[g] * dx * dx + 2.0 * inv_b[g] * dx * dy \
                + inv_c[g] * dy * dy
            alpha = np.minimum(
                alphas_base[g] * np.exp(-0.5 * q), MAX_ALPHA
            )
            active = (q <= CUTOFF_SQ) & (tseg >= MIN_TRANSMITTANCE)
            alpha = np.where(active, alpha, 0.0)
            acc[lo:hi] += (alpha * tseg)[:, None] * colors[g]
            trans[lo:hi] = tseg * (1.0 - alpha)
        out[y] = acc + trans[:, None] * background


def render(cloud, camera, background=(0.0, 0.0, 0.0), threads=1):
    """Rasterize the cloud through the camera over a constant background."""
    background = np.asarray(background, dtype=np.float64)
    if background.shape != (3,):
        raise ValueError("background must be an RGB triplet")
    w, h = camera.width, camera.height
    out = np.empty((h, w, 3))
    projected = _project_all(cloud, camera) if cloud.count else None
    if projected is None:
        out[:] = background
        return Image(pixels=np.clip(out, 0.0, 1.0))
    mean2d, cov2d, colors, opacities = projected
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    inv_a = cov2d[:, 1, 1] / det
    inv_b = -cov2d[:, 0, 1] / det
    inv_c = cov2d[:, 0, 0] / det
    rx = 3.0 * np.sqrt(cov2d[:, 0, 0])
    ry = 3.0 * np.sqrt(cov2d[:, 1, 1])
    x0 = np.clip(np.floor(mean2d[:, 0] - rx), 0, w - 1).astype(np.int64)
    x1 = np.clip(np.ceil(mean2d[:, 0] + rx), 0, w - 1).astype(np.int64)
    y0s = np.clip(np.floor(mean2d[:, 1] - ry), 0, h - 1).astype(np.int64)
    y1s = np.clip(np.ceil(mean2d[:, 1] + ry), 0, h - 1).astype(np.int64)
    on_screen = (mean2d[:, 0] + rx >= 0) & (mean2d[:, 0] - rx < w) \
        & (mean2d[:, 1] + ry >= 0) & (mean2d[:, 1] - ry < h)
    sel = np.flatnonzero(on_screen)
    splats = (mean2d[sel], inv_a[sel], inv_b[sel], inv_c[sel],
              colors[sel], opacities[sel], x0[sel], x1[sel],
              y0s[sel], y1s[sel])
    threads = max(1, int(threads))
    if threads == 1:
        _composite_rows(0, h, w, splats, background, out)
    else:
        bands = np.linspace(0, h, threads + 1).astype(int)
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            futures = [
                pool.submit(_composite_rows, bands[i], bands[i + 1],
                            w, splats, background, out)
                for i in range(threads)
            ]
            for f in futures:
                f.result()
    return Image(pixels=np.clip(out, 0.0, 1.0))


def write_ppm(image, path):
    """Binary 8-bit PPM export."""
    pix = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (image.width, image.height))
        fh.write(pix.tobytes())


def read_ppm(path):
    """Parse the binary 8-bit PPM files write_ppm produces."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(data):
            raise ValueError("truncated PPM header in %s" % path)
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        if data[pos : pos + 1].isspace():
            pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1
    if fields[0] != b"P6" or fields[3] != b"255":
        raise ValueError("%s is not an 8-bit binary PPM" % path)
    width, height = int(fields[1]), int(fields[2])
    body = data[pos : pos + 3 * width * height]
    if len(body) != 3 * width * height:
        raise ValueError("PPM payload truncated in %s" % path)
    pixels = np.frombuffer(body, dtype=np.uint8).astype(np.float64)
    return Image(pixels=pixels.reshape(height, width, 3) / 255.0)
