"""Tests for the data model and interchange-format round trips."""

import struct

import numpy as np
import pytest

from splatcodec import model
from splatcodec.model import (
    GaussianCloud,
    ModelFormatError,
    canonical_quaternion,
    covariance_from,
    read_model,
    rotation_matrix,
    write_model,
)


def _quat_mul(a, b):
    # independent oracle for quaternion composition (w, x, y, z)
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _random_cloud(rng, n):
    q = rng.normal(size=(n, 4))
    return GaussianCloud(
        positions=rng.normal(size=(n, 3)),
        rotations=canonical_quaternion(q),
        scales=np.exp(rng.normal(size=(n, 3)) * 0.3),
        sh_dc=rng.normal(size=(n, 3)),
        sh_ac=rng.normal(size=(n, 15, 3)) * 0.1,
        opacities=rng.uniform(0.01, 0.99, size=n),
    )


def _build_file(records, count=None):
    """Handcrafted interchange bytes, independent of write_model."""
    n = len(records) if count is None else count
    header = (
        "ply\nformat binary_little_endian 1.0\nelement vertex %d\n" % n
        + "".join("property float %s\n" % p for p in model.PLY_PROPERTIES)
        + "end_header\n"
    ).encode()
    body = b"".join(struct.pack("<62f", *r) for r in records)
    return header + body


def _record(**overrides):
    vals = dict.fromkeys(model.PLY_PROPERTIES, 0.0)
    vals["rot_0"] = 1.0
    vals.update(overrides)
    return [vals[p] for p in model.PLY_PROPERTIES]


def test_covariance_identity_rotation():
    cov = covariance_from(np.array([1.0, 0, 0, 0]), np.array([1.0, 2.0, 3.0]))
    assert np.allclose(cov, np.diag([1.0, 4.0, 9.0]))


def test_covariance_90deg_about_z():
    h = np.sqrt(0.5)
    cov = covariance_from(np.array([h, 0, 0, h]), np.array([1.0, 2.0, 1.0]))
    assert np.allclose(cov, np.diag([4.0, 1.0, 1.0]), atol=1e-12)


def test_covariance_eigenvalues_are_squared_scales():
    rng = np.random.default_rng(0)
    q = canonical_quaternion(rng.normal(size=(200, 4)))
    s = np.exp(rng.normal(size=(200, 3)))
    cov = covariance_from(q, s)
    eig = np.linalg.eigvalsh(cov)
    assert np.allclose(eig, np.sort(s * s, axis=1), atol=1e-9)


def test_covariance_rotation_equivariant():
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = canonical_quaternion(rng.normal(size=4))
        r = canonical_quaternion(rng.normal(size=4))
        s = np.exp(rng.normal(size=3))
        lhs = covariance_from(canonical_quaternion(_quat_mul(r, q)), s)
        rot = rotation_matrix(r)
        rhs = rot @ covariance_from(q, s) @ rot.T
        assert np.allclose(lhs, rhs, atol=1e-9)


def test_covariance_rejects_non_unit_quaternion():
    with pytest.raises(ValueError):
        covariance_from(np.array([1.0, 1.0, 0, 0]), np.ones(3))


def test_canonical_quaternion_sign():
    q = canonical_quaternion(np.array([-1.0, 0, 0, 0]))
    assert np.allclose(q, [1, 0, 0, 0])
    q = canonical_quaternion(np.array([0.0, -2.0, 0, 0]))
    assert np.allclose(q, [0, 1, 0, 0])
    q = canonical_quaternion(np.array([0.0, 0.0, 0.0, -3.0]))
    assert np.allclose(q, [0, 0, 0, 1])
    with pytest.raises(ValueError):
        canonical_quaternion(np.zeros(4))


def test_read_logistic_of_zero_opacity():
    data = _build_file([_record(opacity=0.0)])
    cloud = read_model(data)
    assert cloud.count == 1
    assert cloud.opacities[0] == pytest.approx(0.5)


def test_read_exp_of_zero_scale():
    data = _build_file([_record()])
    cloud = read_model(data)
    assert np.allclose(cloud.scales[0], [1.0, 1.0, 1.0])


def test_read_normalizes_and_flips_quaternion():
    data = _build_file([_record(rot_0=-2.0, rot_1=0.0, rot_2=0.0, rot_3=2.0)])
    cloud = read_model(data)
    h = np.sqrt(0.5)
    assert np.allclose(cloud.rotations[0], [h, 0, 0, -h])


def test_read_sh_rest_is_channel_major():
    # f_rest_17 is the green channel, higher-order band index 2
    data = _build_file([_record(f_rest_17=1.0)])
    cloud = read_model(data)
    expect = np.zeros((15, 3))
    expect[2, 1] = 1.0
    assert np.array_equal(cloud.sh_ac[0], expect)


def test_write_logit_of_half_is_zero():
    cloud = GaussianCloud.empty(1)
    cloud.opacities[:] = 0.5
    data = write_model(cloud)
    rec = np.frombuffer(data[-62 * 4 :], dtype="<f4")
    assert rec[model.PLY_PROPERTIES.index("opacity")] == 0.0
    assert np.all(rec[3:6] == 0.0)  # normals written as zeros


def test_write_clamps_opacity_endpoints():
    cloud = GaussianCloud.empty(2)
    cloud.opacities[:] = [0.0, 1.0]
    back = read_model(write_model(cloud))
    assert 0.0 < back.opacities[0] < 1e-6
    assert 1.0 - 1e-6 < back.opacities[1] < 1.0


def test_empty_cloud_round_trip():
    data = write_model(GaussianCloud.empty(0))
    cloud = read_model(data)
    assert cloud.count == 0


def test_round_trip_random_cloud():
    rng = np.random.default_rng(2)
    cloud = _random_cloud(rng, 500)
    back = read_model(write_model(cloud))
    for name in ("positions", "rotations", "scales", "sh_dc", "sh_ac",
                 "opacities"):
        a, b = getattr(cloud, name), getattr(back, name)
        assert np.abs(a - b).max() < 1e-6, name


def test_round_trip_is_idempotent():
    rng = np.random.default_rng(3)
    once = read_model(write_model(_random_cloud(rng, 100)))
    twice = read_model(write_model(once))
    # raw float32 fields reproduce exactly
    for name in ("positions", "sh_dc", "sh_ac"):
        assert np.array_equal(getattr(once, name), getattr(twice, name)), name
    # activated fields are stable to one float32 ulp under renormalization
    for name in ("rotations", "scales", "opacities"):
        a, b = getattr(once, name), getattr(twice, name)
        assert np.allclose(a, b, rtol=3e-7, atol=3e-7), name


def test_parse_errors_carry_byte_offsets():
    with pytest.raises(ModelFormatError, match="byte offset"):
        read_model(b"not a ply file")
    with pytest.raises(ModelFormatError, match="magic"):
        read_model(b"plx\nend_header\n")
    good = _build_file([_record()])
    with pytest.raises(ModelFormatError, match="truncated"):
        read_model(good[:-8])
    with pytest.raises(ModelFormatError, match="format"):
        read_model(good.replace(b"binary_little_endian", b"ascii" + b" " * 15))


def test_parse_rejects_wrong_property_set():
    header = (
        "ply\nformat binary_little_endian 1.0\nelement vertex 0\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n"
    ).encode()
    with pytest.raises(ModelFormatError, match="missing properties"):
        read_model(header)


def test_parse_rejects_reordered_properties():
    good = _build_file([])
    swapped = good.replace(b"property float x\nproperty float y\n",
                           b"property float y\nproperty float x\n")
    with pytest.raises(ModelFormatError, match="property list"):
        read_model(swapped)


def test_parse_allows_comment_lines():
    good = _build_file([_record(opacity=1.0)])
    with_comment = good.replace(b"ply\n", b"ply\ncomment made by a test\n")
    cloud = read_model(with_comment)
    assert cloud.count == 1


def test_read_rejects_zero_quaternion():
    data = _build_file([_record(rot_0=0.0)])
    with pytest.raises(ModelFormatError, match="quaternion"):
        read_model(data)


def test_cloud_shape_validation():
    with pytest.raises(ValueError, match="shape"):
        GaussianCloud(
            positions=np.zeros((2, 3)),
            rotations=np.zeros((3, 4)),
            scales=np.ones((2, 3)),
            sh_dc=np.zeros((2, 3)),
            sh_ac=np.zeros((2, 15, 3)),
            opacities=np.ones(2),
        )


def test_validate_flags_bad_values():
    cloud = GaussianCloud.empty(1)
    cloud.scales[0, 0] = -1.0
    with pytest.raises(ValueError, match="scales"):
        cloud.validate()
    cloud = GaussianCloud.empty(1)
    cloud.opacities[0] = 1.5
    with pytest.raises(ValueError, match="opacities"):
        cloud.validate()
    cloud = GaussianCloud.empty(1)
    cloud.rotations[0] = [0.5, 0.5, 0.5, 0.5 + 1e-3]
    with pytest.raises(ValueError, match="unit"):
        cloud.validate()
