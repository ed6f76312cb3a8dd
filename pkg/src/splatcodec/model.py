"""Gaussian splat data model and the standard point-list interchange format.

A scene is a list of anisotropic 3D Gaussians. Each one carries a position,
a unit quaternion and per-axis scales (together defining the covariance),
degree-3 spherical harmonic color coefficients and an opacity. On disk the
de-facto interchange layout is a binary little-endian PLY file with 62
float32 properties per vertex; opacity and scale are stored pre-activation
(logit / log domain) and are mapped to linear domain on load.
"""

from dataclasses import dataclass

import numpy as np

# Vertex property order of the interchange format. Normals are carried for
# compatibility but ignored; f_rest is channel-major (15 red coefficients,
# then 15 green, then 15 blue); rot is (w, x, y, z).
PLY_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + ["f_dc_%d" % i for i in range(3)]
    + ["f_rest_%d" % i for i in range(45)]
    + ["opacity"]
    + ["scale_%d" % i for i in range(3)]
    + ["rot_%d" % i for i in range(4)]
)

_OPACITY_EPS = 1e-7
_QUAT_NORM_TOL = 1e-6


class ModelFormatError(ValueError):
    """Raised when an interchange file cannot be parsed."""


@dataclass
class GaussianCloud:
    """A scene as parallel arrays over N Gaussians.

    positions  (N, 3) world-space means
    rotations  (N, 4) unit quaternions (w, x, y, z), w >= 0
    scales     (N, 3) per-axis standard deviations, linear domain, > 0
    sh_dc      (N, 3) degree-0 SH coefficients per RGB channel
    sh_ac      (N, 15, 3) higher-order SH coefficients, band-major
    opacities  (N,) alpha in [0, 1], post-activation
    """

    positions: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    sh_dc: np.ndarray
    sh_ac: np.ndarray
    opacities: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        self.sh_dc = np.ascontiguousarray(self.sh_dc, dtype=np.float64)
        self.sh_ac = np.ascontiguousarray(self.sh_ac, dtype=np.float64)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64)
        n = self.positions.shape[0] if self.positions.ndim == 2 else -1
        shapes = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "scales": (n, 3),
            "sh_dc": (n, 3),
            "sh_ac": (n, 15, 3),
        }
        for name, want in shapes.items():
            got = getattr(self, name).shape
            if got != want:
                raise ValueError(
                    "%s has shape %r, expected %r" % (name, got, want)
                )
        if self.opacities.shape != (n,):
            raise ValueError(
                "opacities has shape %r, expected (%d,)"
                % (self.opacities.shape, n)
            )

    @property
    def count(self):
        return self.positions.shape[0]

    def __len__(self):
        return self.count

    @classmethod
    def empty(cls, count=0):
        """A cloud of identity Gaussians, useful as a build target."""
        rot = np.zeros((count, 4))
        rot[:, 0] = 1.0
        return cls(
            positions=np.zeros((count, 3)),
            rotations=rot,
            scales=np.ones((count, 3)),
            sh_dc=np.zeros((count, 3)),
            sh_ac=np.zeros((count, 15, 3)),
            opacities=np.ones(count),
        )

    def validate(self):
        """Check the numeric invariants; raises ValueError on violation."""
        norms = np.linalg.norm(self.rotations, axis=1)
        if self.count and np.abs(norms - 1.0).max() > _QUAT_NORM_TOL:
            raise ValueError("rotations are not unit quaternions")
        if np.any(self.rotations[:, 0] < 0):
            raise ValueError("quaternion w components must be nonnegative")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise ValueError("opacities must lie in [0, 1]")
        return self


def canonical_quaternion(q):
    """Normalize quaternions and fix the sign ambiguity.

    The representative of {q, -q} has w >= 0; on the w = 0 great circle the
    first nonzero of (x, y, z) is made positive so the choice stays unique.
    Accepts (4,) or (N, 4); zero-norm input raises ValueError.
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q).copy()
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("zero-norm quaternion cannot be normalized")
    q /= norms[:, None]
    # sign key: w, falling back through x, y, z at exact zeros
    key = q[:, 0].copy()
    for axis in (1, 2, 3):
        mask = key == 0.0
        if not mask.any():
            break
        key[mask] = q[mask, axis]
    q[key < 0] *= -1.0
    return q[0] if single else q


def rotation_matrix(q):
    """Rotation matrices for unit quaternions (w, x, y, z).

    Accepts (4,) or (N, 4) and returns (3, 3) or (N, 3, 3).
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m[0] if single else m


def covariance_from(q, s):
    """Covariance R(q) diag(s^2) R(q)^T for quaternion q and scales s.

    Accepts single (4,), (3,) inputs or batches (N, 4), (N, 3); quaternions
    must be unit within 1e-6.
    """
    q = np.asarray(q, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    s = np.atleast_2d(s)
    norms = np.linalg.norm(q, axis=1)
    if q.shape[0] and np.abs(norms - 1.0).max() > _QUAT_NORM_TOL:
        raise ValueError("quaternion is not unit-norm within tolerance")
    r = rotation_matrix(q)
    cov = np.einsum("nij,nj,nkj->nik", r, s * s, r)
    return cov[0] if single else cov


def _logistic(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def _logit(p):
    p = np.clip(p, _OPACITY_EPS, 1.0 - _OPACITY_EPS)
    return np.log(p) - np.log1p(-p)


def _parse_header(data):
    """Returns (vertex_count, body_offset); raises ModelFormatError."""
    end = data.find(b"end_header\n")
    if end < 0:
        raise ModelFormatError("no end_header line found (byte offset 0)")
    body_offset = end + len(b"end_header\n")
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(
            "header is not ASCII (byte offset %d)" % exc.start
        ) from None
    lines = header.split("\n")
    offset = 0

    def fail(msg):
        raise ModelFormatError("%s (byte offset %d)" % (msg, offset))

    if not lines or lines[0].strip() != "ply":
        fail("missing ply magic line")
    count = None
    props = []
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        stripped = line.strip()
        if not stripped or stripped.startswith("comment"):
            offset += len(line) + 1
            continue
        tok = stripped.split()
        if tok[0] == "format":
            if tok[1:] != ["binary_little_endian", "1.0"]:
                fail("unsupported format %r" % stripped)
        elif tok[0] == "element":
            if count is not None or tok[1] != "vertex" or len(tok) != 3:
                fail("expected a single vertex element")
            try:
                count = int(tok[2])
            except ValueError:
                fail("bad vertex count %r" % tok[2])
            if count < 0:
                fail("negative vertex count")
        elif tok[0] == "property":
            if tok[1] != "float" or len(tok) != 3:
                fail("unsupported property %r" % stripped)
            props.append(tok[2])
        else:
            fail("unrecognized header line %r" % stripped)
        offset += len(line) + 1
    if count is None:
        fail("missing vertex element")
    if props != PLY_PROPERTIES:
        missing = set(PLY_PROPERTIES) - set(props)
        if missing:
            fail("missing properties: %s" % ", ".join(sorted(missing)))
        fail("property list does not match the 62-property layout")
    return count, body_offset


def read_model(data):
    """Parse interchange-format bytes into a canonical GaussianCloud."""
    data = bytes(data)
    count, body_offset = _parse_header(data)
    want = count * len(PLY_PROPERTIES) * 4
    body = data[body_offset : body_offset + want]
    if len(body) < want:
        raise ModelFormatError(
            "body truncated: expected %d bytes, file ends at byte offset %d"
            % (want, body_offset + len(body))
        )
    rec = np.frombuffer(body, dtype="<f4").reshape(
        count, len(PLY_PROPERTIES)
    ).astype(np.float64)
    f_rest = rec[:, 9:54]
    # stored channel-major (15 per channel) -> in-memory (band, channel)
    sh_ac = f_rest.reshape(count, 3, 15).transpose(0, 2, 1)
    try:
        rotations = canonical_quaternion(rec[:, 58:62]) if count else \
            np.zeros((0, 4))
    except ValueError:
        raise ModelFormatError(
            "zero-norm rotation quaternion in body (byte offset %d)"
            % body_offset
        ) from None
    cloud = GaussianCloud(
        positions=rec[:, 0:3],
        rotations=rotations,
        scales=np.exp(rec[:, 55:58]),
        sh_dc=rec[:, 6:9],
        sh_ac=sh_ac,
        opacities=_logistic(rec[:, 54]),
    )
    return cloud.validate()


def write_model(cloud):
    """Serialize a GaussianCloud to interchange-format bytes."""
    cloud.validate()
    n = cloud.count
    header = "".join(
        ["ply\n", "format binary_little_endian 1.0\n",
         "element vertex %d\n" % n]
        + ["property float %s\n" % p for p in PLY_PROPERTIES]
        + ["end_header\n"]
    ).encode("ascii")
    rec = np.zeros((n, len(PLY_PROPERTIES)), dtype=np.float64)
    rec[:, 0:3] = cloud.positions
    rec[:, 6:9] = cloud.sh_dc
    rec[:, 9:54] = cloud.sh_ac.transpose(0, 2, 1).reshape(n, 45)
    rec[:, 54] = _logit(cloud.opacities)
    rec[:, 55:58] = np.log(cloud.scales)
    rec[:, 58:62] = cloud.rotations
    return header + rec.astype("<f4").tobytes()


def load_model(path):
    with open(path, "rb") as fh:
        return read_model(fh.read())


def save_model(path, cloud):
    with open(path, "wb") as fh:
        fh.write(write_model(cloud))
