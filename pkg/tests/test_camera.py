"""Tests for the camera model, projection, and calibration refinement."""

import numpy as np
import pytest

from avitrack.camera import (
    CameraModel,
    project,
    project_many,
    projection_matrix,
    refine_calibration,
    reprojection_error,
    rotation_from_rvec,
    rvec_from_rotation,
)
from avitrack.errors import (
    BehindCameraError,
    DegenerateConfigurationError,
    EmptyInputError,
)


def _camera(**overrides) -> CameraModel:
    defaults = dict(
        cam_id="c",
        fx=1000.0,
        fy=1000.0,
        cx=960.0,
        cy=540.0,
        dist=np.zeros(5),
        rotation=np.eye(3),
        translation=np.zeros(3),
        image_size=(1920, 1080),
    )
    defaults.update(overrides)
    return CameraModel(**defaults)


class TestConstruction:
    def test_rejects_non_orthonormal_rotation(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-3
        with pytest.raises(ValueError, match="orthonormal"):
            _camera(rotation=bad)

    def test_rejects_reflection(self):
        with pytest.raises(ValueError, match="determinant"):
            _camera(rotation=np.diag([1.0, 1.0, -1.0]))

    def test_rejects_nonpositive_focal(self):
        with pytest.raises(ValueError, match="focal"):
            _camera(fx=0.0)

    def test_rejects_principal_point_outside_image(self):
        with pytest.raises(ValueError, match="principal"):
            _camera(cx=1920.0)


class TestProjectionMatrix:
    def test_identity_camera(self, ideal_camera):
        """K=I, R=I, t=0 gives [I | 0]."""
        p = projection_matrix(ideal_camera)
        np.testing.assert_allclose(p, np.hstack([np.eye(3), np.zeros((3, 1))]))

    def test_first_row_with_focal_two(self):
        """fx=fy=2, c=0, R=I, t=(1,0,0): first row is (2, 0, 0, 2)."""
        cam = _camera(
            fx=2.0, fy=2.0, cx=0.0, cy=0.0,
            translation=np.array([1.0, 0.0, 0.0]),
            image_size=(2, 2),
        )
        np.testing.assert_allclose(projection_matrix(cam)[0], [2.0, 0.0, 0.0, 2.0])

    def test_rank_three(self, default_rig):
        for cam in default_rig.values():
            assert np.linalg.matrix_rank(projection_matrix(cam)) == 3

    def test_matrix_reproduces_forward_projection(self, default_rig):
        """P @ X matches the direct K(RX+t) evaluation without distortion."""
        rng = np.random.default_rng(5)
        points = rng.uniform([0.5, 0.5, 0.3], [3.5, 2.9, 1.7], size=(50, 3))
        for cam in default_rig.values():
            zero_dist = CameraModel(
                cam_id=cam.cam_id, fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
                dist=np.zeros(5), rotation=cam.rotation,
                translation=cam.translation, image_size=cam.image_size,
            )
            p = projection_matrix(zero_dist)
            homog = (p @ np.hstack([points, np.ones((50, 1))]).T).T
            via_matrix = homog[:, :2] / homog[:, 2:3]
            direct, in_front = project_many(zero_dist, points)
            assert np.all(in_front)
            np.testing.assert_allclose(via_matrix, direct, atol=1e-9)


class TestProject:
    def test_on_axis_point(self, ideal_camera):
        np.testing.assert_allclose(project(ideal_camera, [0.0, 0.0, 5.0]), [0.0, 0.0])

    def test_translated_camera(self):
        cam = _camera(
            fx=1.0, fy=1.0, cx=0.0, cy=0.0,
            translation=np.array([1.0, 0.0, 0.0]), image_size=(2, 2),
        )
        np.testing.assert_allclose(project(cam, [0.0, 0.0, 2.0]), [0.5, 0.0])

    def test_behind_camera_raises(self, ideal_camera):
        with pytest.raises(BehindCameraError):
            project(ideal_camera, [0.0, 0.0, -1.0])

    def test_zero_distortion_matches_direct_formula(self, default_rig):
        """Round trip: projection equals the closed-form pinhole map."""
        rng = np.random.default_rng(9)
        points = rng.uniform([0.3, 0.3, 0.2], [3.7, 3.1, 1.8], size=(200, 3))
        cam = next(iter(default_rig.values()))
        zero_dist = CameraModel(
            cam_id="z", fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
            dist=np.zeros(5), rotation=cam.rotation,
            translation=cam.translation, image_size=cam.image_size,
        )
        pixels, in_front = project_many(zero_dist, points)
        cam_pts = points @ zero_dist.rotation.T + zero_dist.translation
        expected = np.column_stack(
            [
                zero_dist.fx * cam_pts[:, 0] / cam_pts[:, 2] + zero_dist.cx,
                zero_dist.fy * cam_pts[:, 1] / cam_pts[:, 2] + zero_dist.cy,
            ]
        )
        assert np.all(in_front)
        np.testing.assert_allclose(pixels, expected, atol=1e-9)

    def test_undistort_inverts_distort(self):
        """undistort(distort(x)) within 1e-8 normalized units for |x| <= 1.5."""
        cam = _camera(dist=np.array([0.02, -0.005, 0.0005, -0.0005, 0.0002]))
        rng = np.random.default_rng(3)
        normalized = rng.uniform(-1.5, 1.5, size=(500, 2))
        distorted = cam.distort(normalized)
        pixels = np.column_stack(
            [cam.fx * distorted[:, 0] + cam.cx, cam.fy * distorted[:, 1] + cam.cy]
        )
        recovered = cam.undistort(pixels)
        assert np.max(np.abs(recovered - normalized)) <= 1e-8


class TestReprojectionError:
    def test_identical_lists(self):
        pts = np.array([[1.0, 2.0], [3.0, 4.0]])
        stats = reprojection_error(pts, pts)
        assert stats.mean == 0.0
        assert stats.pct_below_threshold == 100.0

    def test_three_four_five(self):
        stats = reprojection_error([[0.0, 0.0]], [[3.0, 4.0]])
        assert stats.mean == pytest.approx(5.0)
        assert stats.min == pytest.approx(5.0)
        assert stats.max == pytest.approx(5.0)

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            reprojection_error([], [])

    def test_has_threshold_share_field(self):
        stats = reprojection_error(
            [[0.0, 0.0], [0.0, 0.0]], [[3.0, 4.0], [30.0, 40.0]]
        )
        assert stats.pct_below_threshold == pytest.approx(50.0)
        assert stats.threshold_px == 25.0


class TestRodrigues:
    def test_round_trip_random(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            rvec = rng.uniform(-np.pi, np.pi, size=3)
            rot = rotation_from_rvec(rvec)
            np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
            np.testing.assert_allclose(
                rotation_from_rvec(rvec_from_rotation(rot)), rot, atol=1e-9
            )

    def test_near_pi_rotation(self):
        rvec = np.array([np.pi - 1e-9, 0.0, 0.0])
        rot = rotation_from_rvec(rvec)
        recovered = rvec_from_rotation(rot)
        np.testing.assert_allclose(rotation_from_rvec(recovered), rot, atol=1e-7)

    def test_zero_rotation(self):
        np.testing.assert_allclose(rvec_from_rotation(np.eye(3)), np.zeros(3))


def _known_pairs(cam: CameraModel, points: np.ndarray):
    pixels, in_front = project_many(cam, points)
    assert np.all(in_front)
    return [(points[i], pixels[i]) for i in range(len(points))]


class TestRefineCalibration:
    @pytest.fixture
    def true_camera(self, default_rig) -> CameraModel:
        return default_rig["cam0"]

    @pytest.fixture
    def world_points(self) -> np.ndarray:
        rng = np.random.default_rng(21)
        return rng.uniform([0.4, 0.4, 0.3], [3.6, 3.0, 1.7], size=(12, 3))

    def test_already_optimal_is_fixed_point(self, true_camera, world_points):
        """An exact calibration stays at zero error."""
        known = _known_pairs(true_camera, world_points)
        refined = refine_calibration(true_camera, known)
        pixels, _ = project_many(refined, world_points)
        observed = np.array([q for _, q in known])
        assert np.linalg.norm(pixels - observed, axis=1).sum() <= 1e-9

    def test_improves_perturbed_translation(self, true_camera, world_points):
        """1% translation error shrinks against the forward-projection oracle."""
        known = _known_pairs(true_camera, world_points)
        observed = np.array([q for _, q in known])

        perturbed = CameraModel(
            cam_id=true_camera.cam_id,
            fx=true_camera.fx, fy=true_camera.fy,
            cx=true_camera.cx, cy=true_camera.cy,
            dist=true_camera.dist,
            rotation=true_camera.rotation,
            translation=true_camera.translation * 1.01,
            image_size=true_camera.image_size,
        )

        def total_error(cam):
            pixels, _ = project_many(cam, world_points)
            return np.linalg.norm(pixels - observed, axis=1).sum()

        before = total_error(perturbed)
        refined = refine_calibration(perturbed, known)
        after = total_error(refined)
        assert after < before
        assert after < 0.5 * before

    def test_five_points_rejected(self, true_camera, world_points):
        known = _known_pairs(true_camera, world_points[:5])
        with pytest.raises(DegenerateConfigurationError):
            refine_calibration(true_camera, known)

    def test_collinear_points_rejected(self, true_camera):
        t = np.linspace(0.2, 0.8, 8)
        line = np.column_stack([1.0 + 2.0 * t, 1.0 + 1.5 * t, 0.5 + t])
        known = _known_pairs(true_camera, line)
        with pytest.raises(DegenerateConfigurationError):
            refine_calibration(true_camera, known)

    def test_coplanar_points_rejected(self, true_camera):
        rng = np.random.default_rng(2)
        xy = rng.uniform(0.5, 3.0, size=(10, 2))
        plane = np.column_stack([xy, np.full(10, 1.0)])
        known = _known_pairs(true_camera, plane)
        with pytest.raises(DegenerateConfigurationError):
            refine_calibration(true_camera, known)
