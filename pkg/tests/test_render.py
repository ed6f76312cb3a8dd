"""Renderer tests: projection oracle, compositing, determinism."""

import numpy as np
import pytest

from splatcodec import render as rn
from splatcodec.model import GaussianCloud

C0 = 0.28209479177387814


def _cloud(positions, scale=0.1, opacity=0.9, rgb=(0.9, 0.9, 0.9)):
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    cloud = GaussianCloud.empty(positions.shape[0])
    cloud.positions[:] = positions
    cloud.scales[:] = scale
    cloud.opacities[:] = opacity
    cloud.sh_dc[:] = (np.asarray(rgb) - 0.5) / C0
    return cloud


def _axis_camera(distance=4.0, size=65, focal=120.0):
    rot, trans = rn.look_at((0.0, 0.0, -distance), (0.0, 0.0, 0.0))
    half = size / 2.0
    return rn.Camera(rotation=rot, translation=trans, fx=focal, fy=focal,
                     cx=half, cy=half, width=size, height=size)


class TestCamera:
    def test_validation(self):
        good = np.eye(3)
        with pytest.raises(ValueError):
            rn.Camera(good * 2.0, np.zeros(3), 1, 1, 0, 0, 8, 8)
        with pytest.raises(ValueError):
            rn.Camera(good, np.zeros(3), 0.0, 1, 0, 0, 8, 8)
        with pytest.raises(ValueError):
            rn.Camera(good, np.zeros(3), 1, 1, 0, 0, 0, 8)

    def test_center_inverts_extrinsics(self):
        rot, trans = rn.look_at((1.0, 2.0, -3.0), (0.0, 0.5, 0.0))
        cam = rn.Camera(rot, trans, 10, 10, 4, 4, 8, 8)
        assert np.allclose(cam.center, (1.0, 2.0, -3.0))

    def test_look_at_is_proper_rotation_facing_target(self):
        rot, trans = rn.look_at((0.3, -0.7, -2.0), (0.1, 0.0, 0.4))
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(rot), 1.0)
        p = rot @ np.array([0.1, 0.0, 0.4]) + trans
        assert np.allclose(p[:2], 0.0, atol=1e-12) and p[2] > 0

    def test_camera_file_round_trip(self, tmp_path):
        rot, trans = rn.look_at((1.0, 0.5, -2.0), (0.0, 0.0, 0.0))
        cams = [
            rn.Camera(rot, trans, 100.0, 90.0, 32.0, 24.0, 64, 48),
            rn.Camera(np.eye(3), np.array([0.0, 0.0, 5.0]),
                      55.5, 44.25, 16.0, 16.0, 32, 32),
        ]
        path = tmp_path / "cams.txt"
        rn.save_cameras(cams, path)
        back = rn.load_cameras(path)
        assert len(back) == 2
        for a, b in zip(cams, back):
            assert np.array_equal(a.rotation, b.rotation)
            assert np.array_equal(a.translation, b.translation)
            assert (a.fx, a.fy, a.cx, a.cy) == (b.fx, b.fy, b.cx, b.cy)
            assert (a.width, a.height) == (b.width, b.height)

    def test_camera_file_comments_and_errors(self, tmp_path):
        path = tmp_path / "cams.txt"
        line = " ".join(["1", "0", "0", "0", "1", "0", "0", "0", "1",
                         "0", "0", "0", "10", "10", "4", "4", "8", "8"])
        path.write_text("# a comment\n\n" + line + "\n")
        assert len(rn.load_cameras(path)) == 1
        path.write_text(line + " 99\n")
        with pytest.raises(ValueError):
            rn.load_cameras(path)


class TestEvalSh:
    def test_zero_coefficients_give_gray(self):
        rgb = rn.eval_sh(np.array([0.0, 0.0, 1.0]), np.zeros(3),
                         np.zeros((15, 3)))
        assert np.allclose(rgb, 0.5)

    def test_dc_linearity(self):
        dc = np.array([1.0 / C0, 0.0, 0.0])
        rgb = rn.eval_sh(np.array([1.0, 0.0, 0.0]), dc, np.zeros((15, 3)))
        assert np.allclose(rgb, [1.5, 0.5, 0.5])

    def test_isotropic_when_ac_zero(self):
        dc = np.array([0.2, -0.1, 0.4])
        dirs = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, -1.0]])
        out = rn.eval_sh(dirs, np.tile(dc, (3, 1)),
                         np.zeros((3, 15, 3)))
        assert np.allclose(out, out[0])

    def test_band1_flips_with_direction(self):
        ac = np.zeros((15, 3))
        ac[2, 0] = 1.0  # the x-linear band-1 term
        d = np.array([1.0, 0.0, 0.0])
        plus = rn.eval_sh(d, np.zeros(3), ac)
        minus = rn.eval_sh(-d, np.zeros(3), ac)
        assert np.isclose(plus[0] - 0.5, -(minus[0] - 0.5))
        assert not np.isclose(plus[0], 0.5)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        dirs = rng.normal(size=(10, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dc = rng.normal(size=(10, 3))
        ac = rng.normal(size=(10, 15, 3))
        batch = rn.eval_sh(dirs, dc, ac)
        for i in range(10):
            assert np.allclose(batch[i], rn.eval_sh(dirs[i], dc[i], ac[i]))


class TestProjection:
    def test_isotropic_on_axis(self):
        cam = _axis_camera(distance=4.0, focal=120.0)
        sigma = 0.05 ** 2 * np.eye(3)
        out = rn.project_gaussian(cam, np.zeros(3), sigma)
        assert out is not None
        mean2d, cov2d, depth = out
        assert np.isclose(depth, 4.0)
        assert np.allclose(mean2d, [32.5, 32.5])
        want = (120.0 * 0.05 / 4.0) ** 2
        assert np.allclose(cov2d, want * np.eye(2) + 0.3 * np.eye(2),
                           rtol=1e-12)

    def test_doubling_depth_halves_projected_std(self):
        cam = _axis_camera(distance=4.0)
        sigma = 0.04 ** 2 * np.eye(3)
        _, near_cov, _ = rn.project_gaussian(cam, np.zeros(3), sigma)
        _, far_cov, _ = rn.project_gaussian(cam, np.array([0, 0, 4.0]),
                                            sigma)
        near_sd = np.sqrt(near_cov[0, 0] - 0.3)
        far_sd = np.sqrt(far_cov[0, 0] - 0.3)
        assert np.isclose(near_sd, 2.0 * far_sd, rtol=1e-12)

    def test_behind_camera_culled(self):
        cam = _axis_camera(distance=4.0)
        assert rn.project_gaussian(
            cam, np.array([0.0, 0.0, -5.0]), np.eye(3)
        ) is None

    def test_matches_finite_difference_jacobian(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            if np.linalg.det(q) < 0:
                q[:, 0] *= -1.0
            rot = q.T
            trans = rng.normal(size=3)
            cam = rn.Camera(rot, trans, fx=140.0, fy=95.0, cx=40.0,
                            cy=30.0, width=80, height=60)
            p_cam = np.array([rng.uniform(-0.5, 0.5),
                              rng.uniform(-0.5, 0.5),
                              rng.uniform(1.5, 6.0)])
            mean = rot.T @ (p_cam - trans)
            a = rng.normal(size=(3, 3)) * 0.02
            sigma = a @ a.T + 0.001 * np.eye(3)

            def proj(m):
                p = rot @ m + trans
                return np.array([cam.fx * p[0] / p[2] + cam.cx,
                                 cam.fy * p[1] / p[2] + cam.cy])

            eps = 1e-6
            jac = np.zeros((2, 3))
            for k in range(3):
                step = np.zeros(3)
                step[k] = eps
                jac[:, k] = (proj(mean + step) - proj(mean - step)) \
                    / (2 * eps)
            want = jac @ sigma @ jac.T
            _, cov2d, _ = rn.project_gaussian(cam, mean, sigma)
            got = cov2d - 0.3 * np.eye(2)
            assert np.abs(got - want).max() <= 1e-3 * np.abs(want).max()


class TestRender:
    def test_empty_cloud_gives_background(self):
        cam = _axis_camera(size=17)
        img = rn.render(GaussianCloud.empty(0), cam,
                        background=(0.2, 0.4, 0.6))
        assert img.pixels.shape == (17, 17, 3)
        assert np.array_equal(
            img.pixels, np.tile([0.2, 0.4, 0.6], (17, 17, 1))
        )

    def test_zero_opacity_gives_background(self):
        cam = _axis_camera(size=17)
        cloud = _cloud([[0.0, 0.0, 0.0]], scale=0.3, opacity=0.0)
        img = rn.render(cloud, cam, background=(0.1, 0.1, 0.1))
        assert np.allclose(img.pixels, 0.1)

    def test_behind_camera_ignored(self):
        cam = _axis_camera(size=17)
        front = _cloud([[0.0, 0.0, 0.0]])
        both = _cloud([[0.0, 0.0, 0.0], [0.0, 0.0, -6.0]])
        a = rn.render(front, cam)
        b = rn.render(both, cam)
        assert np.array_equal(a.pixels, b.pixels)

    def test_center_gaussian_profile(self):
        cam = _axis_camera(size=65, distance=4.0)
        cloud = _cloud([[0.0, 0.0, 0.0]], scale=0.15, opacity=0.95,
                       rgb=(0.9, 0.3, 0.3))
        img = rn.render(cloud, cam)
        dist = np.abs(img.pixels - np.array([0.9, 0.3, 0.3])).sum(axis=2)
        flat = np.unravel_index(np.argmin(dist), dist.shape)
        assert flat == (32, 32)
        row = img.pixels[32, :, 0]
        right = row[32:]
        assert np.all(np.diff(right) <= 1e-12)
        assert row[32] > row[40] > row[50]

    def test_low_opacity_linearity(self):
        cam = _axis_camera(size=33, distance=4.0)
        devs = []
        for op in (0.002, 0.01):
            cloud = _cloud([[0.0, 0.0, 0.0]], scale=0.2, opacity=op,
                           rgb=(1.0, 1.0, 1.0))
            img = rn.render(cloud, cam, background=(0.0, 0.0, 0.0))
            devs.append(img.pixels[16, 16, 0])
        ratio = devs[1] / devs[0]
        assert abs(ratio / 5.0 - 1.0) < 0.01

    def test_occlusion_single_opaque_splat(self):
        # one fully opaque splat is capped at alpha 0.99, so the far
        # color can still leak up to about one percent
        cam = _axis_camera(size=33, distance=4.0)
        near = [0.0, 0.0, 0.0]
        far = [0.0, 0.0, 1.5]
        occluded = _cloud([near, far], scale=0.3, opacity=1.0)
        occluded.sh_dc[1] = (np.array([1.0, 0.0, 0.0]) - 0.5) / C0
        alone = _cloud([near], scale=0.3, opacity=1.0)
        a = rn.render(occluded, cam)
        b = rn.render(alone, cam)
        leak = np.abs(a.pixels[16, 16] - b.pixels[16, 16]).max()
        assert leak < 1.1e-2

    def test_occlusion_opaque_stack_suppresses_below_1e3(self):
        cam = _axis_camera(size=33, distance=4.0)
        near = [0.0, 0.0, 0.0]
        far = [0.0, 0.0, 1.5]
        occluded = _cloud([near, near, far], scale=0.3, opacity=1.0)
        occluded.sh_dc[2] = (np.array([1.0, 0.0, 0.0]) - 0.5) / C0
        alone = _cloud([near, near], scale=0.3, opacity=1.0)
        a = rn.render(occluded, cam)
        b = rn.render(alone, cam)
        leak = np.abs(a.pixels[16, 16] - b.pixels[16, 16]).max()
        assert leak < 1e-3

    def test_depth_sorted_compositing(self):
        # a half-transparent near red over far blue: the near color
        # must dominate regardless of cloud ordering
        cam = _axis_camera(size=33, distance=4.0)
        red_near_first = _cloud([[0, 0, 0.0], [0, 0, 1.5]], scale=0.3,
                                opacity=0.6)
        red_near_first.sh_dc[0] = (np.array([1, 0, 0]) - 0.5) / C0
        red_near_first.sh_dc[1] = (np.array([0, 0, 1]) - 0.5) / C0
        blue_near_last = _cloud([[0, 0, 1.5], [0, 0, 0.0]], scale=0.3,
                                opacity=0.6)
        blue_near_last.sh_dc[0] = (np.array([0, 0, 1]) - 0.5) / C0
        blue_near_last.sh_dc[1] = (np.array([1, 0, 0]) - 0.5) / C0
        a = rn.render(red_near_first, cam).pixels[16, 16]
        b = rn.render(blue_near_last, cam).pixels[16, 16]
        assert np.array_equal(a, b)
        assert a[0] > a[2]

    def test_thread_counts_bit_identical(self):
        rng = np.random.default_rng(23)
        n = 300
        cloud = GaussianCloud.empty(n)
        cloud.positions[:] = rng.uniform(-0.8, 0.8, size=(n, 3))
        cloud.scales[:] = rng.uniform(0.01, 0.2, size=(n, 3))
        cloud.opacities[:] = rng.uniform(0.05, 1.0, size=n)
        cloud.sh_dc[:] = rng.normal(size=(n, 3))
        cloud.sh_ac[:] = rng.normal(size=(n, 15, 3)) * 0.2
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        q[q[:, 0] < 0] *= -1
        cloud.rotations[:] = q
        cam = _axis_camera(size=48, distance=3.0)
        single = rn.render(cloud, cam, background=(0.3, 0.2, 0.1),
                           threads=1)
        multi = rn.render(cloud, cam, background=(0.3, 0.2, 0.1),
                          threads=5)
        assert np.array_equal(single.pixels, multi.pixels)

    def test_output_clamped(self):
        cam = _axis_camera(size=17)
        cloud = _cloud([[0.0, 0.0, 0.0]], scale=0.4, opacity=1.0,
                       rgb=(3.0, -1.0, 0.5))
        img = rn.render(cloud, cam)
        assert img.pixels.max() <= 1.0 and img.pixels.min() >= 0.0


class TestPpm:
    def test_header_and_payload(self, tmp_path):
        pixels = np.zeros((2, 3, 3))
        pixels[0, 0] = [1.0, 0.5, 0.0]
        img = rn.Image(pixels=pixels)
        path = tmp_path / "out.ppm"
        rn.write_ppm(img, path)
        data = path.read_bytes()
        assert data.startswith(b"P6\n3 2\n255\n")
        body = data[len(b"P6\n3 2\n255\n"):]
        assert len(body) == 18
        assert body[0] == 255 and body[1] == 128 and body[2] == 0
