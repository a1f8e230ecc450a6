"""Tests for the seven-parameter camera model.

Derived expectations are computed against independent oracles: hand
evaluation of the elementary rotation matrices, pinhole arithmetic done
in the test, and round trips through the inverse operations.
"""

import math

import numpy as np
import pytest

from posefield import camera


def random_pose(rng, frame=512.0):
    return camera.PoseParams(
        azimuth=rng.uniform(0, 2 * math.pi),
        elevation=rng.uniform(-math.pi / 2 + 0.05, math.pi / 2 - 0.05),
        theta=rng.uniform(-math.pi, math.pi),
        depth=math.exp(rng.uniform(math.log(3.0), math.log(30.0))),
        focal=math.exp(rng.uniform(math.log(500.0), math.log(3000.0))),
        u=rng.uniform(0.25 * frame, 0.75 * frame),
        v=rng.uniform(0.25 * frame, 0.75 * frame),
    )


def random_rotation(rng):
    return camera.rotation_from_angles(
        rng.uniform(0, 2 * math.pi),
        rng.uniform(-math.pi / 2, math.pi / 2),
        rng.uniform(-math.pi, math.pi),
    )


class TestPoseParams:
    def test_canonicalizes_angles(self):
        p = camera.PoseParams(-0.5, 4.0, -4.0, 5.0, 500.0, 0.0, 0.0)
        assert 0.0 <= p.azimuth < 2 * math.pi
        assert -math.pi < p.elevation <= math.pi
        assert -math.pi < p.theta <= math.pi
        assert p.azimuth == pytest.approx(2 * math.pi - 0.5)
        assert p.elevation == pytest.approx(4.0 - 2 * math.pi)
        assert p.theta == pytest.approx(2 * math.pi - 4.0)

    def test_canonical_values_kept_bit_exact(self):
        p = camera.PoseParams(1.25, -0.5, 0.75, 5.0, 500.0, 10.0, 20.0)
        assert (p.azimuth, p.elevation, p.theta) == (1.25, -0.5, 0.75)

    @pytest.mark.parametrize("depth,focal", [(0.0, 500.0), (-1.0, 500.0), (5.0, 0.0), (5.0, -2.0)])
    def test_rejects_nonpositive_depth_or_focal(self, depth, focal):
        with pytest.raises(ValueError):
            camera.PoseParams(0, 0, 0, depth, focal, 0, 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            camera.PoseParams(math.nan, 0, 0, 5.0, 500.0, 0, 0)

    def test_dict_round_trip(self):
        p = camera.PoseParams(1.0, 0.5, -0.25, 7.5, 800.0, 100.0, 200.0)
        assert camera.PoseParams.from_dict(p.to_dict()) == p


class TestAngleWrapping:
    def test_wrap_angle_identity_in_range(self):
        for x in (-math.pi + 1e-12, -1.0, 0.0, 1.0, math.pi):
            assert camera.wrap_angle(x) == x

    def test_wrap_angle_boundary(self):
        # -pi maps to the canonical +pi end of the interval
        assert camera.wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert camera.wrap_angle(3 * math.pi) == pytest.approx(math.pi)

    def test_wrap_azimuth_identity_in_range(self):
        for x in (0.0, 1.0, 2 * math.pi - 1e-9):
            assert camera.wrap_azimuth(x) == x

    def test_wrap_azimuth_negative(self):
        assert camera.wrap_azimuth(-0.5) == pytest.approx(2 * math.pi - 0.5)
        assert 0.0 <= camera.wrap_azimuth(-1e-18) < 2 * math.pi


class TestRotationFromAngles:
    def test_identity(self):
        np.testing.assert_allclose(camera.rotation_from_angles(0, 0, 0), np.eye(3), atol=1e-15)

    def test_azimuth_pi_hand_evaluated(self):
        # Ry(pi) = [[-1,0,0],[0,1,0],[0,0,-1]] evaluated by hand
        expected = np.diag([-1.0, 1.0, -1.0])
        np.testing.assert_allclose(camera.rotation_from_angles(math.pi, 0, 0), expected, atol=1e-15)

    def test_composition_order(self):
        a, e, t = 0.7, -0.3, 1.1
        expected = camera.rotation_z(t) @ camera.rotation_x(e) @ camera.rotation_y(a)
        np.testing.assert_array_equal(camera.rotation_from_angles(a, e, t), expected)

    def test_round_trip_with_inverse(self):
        a, e, t = 0.3, 0.2, 0.1
        R = camera.rotation_from_angles(a, e, t)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        rec = camera.angles_from_rotation(R)
        assert rec.azimuth == pytest.approx(a, abs=1e-12)
        assert rec.elevation == pytest.approx(e, abs=1e-12)
        assert rec.theta == pytest.approx(t, abs=1e-12)

    def test_periodicity(self):
        R1 = camera.rotation_from_angles(0.4, -0.2, 0.9)
        R2 = camera.rotation_from_angles(0.4 + 2 * math.pi, -0.2 - 2 * math.pi, 0.9 + 4 * math.pi)
        np.testing.assert_allclose(R1, R2, atol=1e-12)

    def test_always_orthonormal_det_one(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            R = camera.rotation_from_angles(
                rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)
            )
            assert camera.is_rotation(R, tol=1e-9)


class TestAnglesFromRotation:
    def test_identity(self):
        angles = camera.angles_from_rotation(np.eye(3))
        assert tuple(angles) == (0.0, 0.0, 0.0)
        assert not angles.gimbal_lock

    def test_round_trip(self):
        R = camera.rotation_from_angles(1.0, 0.5, -0.25)
        a, e, t = camera.angles_from_rotation(R)
        assert (a, e, t) == pytest.approx((1.0, 0.5, -0.25), abs=1e-12)

    def test_matrix_level_round_trip_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            R = random_rotation(rng)
            rec = camera.angles_from_rotation(R)
            R2 = camera.rotation_from_angles(*rec)
            assert np.linalg.norm(R - R2) < 1e-9

    def test_gimbal_lock_flag_and_representative(self):
        R = camera.rotation_from_angles(1.0, math.pi / 2, 0.3)
        rec = camera.angles_from_rotation(R)
        assert rec.gimbal_lock
        assert rec.theta == 0.0
        # The theta = 0 representative reproduces the same rotation.
        R2 = camera.rotation_from_angles(*rec)
        assert np.linalg.norm(R - R2) < 1e-9

    def test_gimbal_lock_negative_elevation(self):
        R = camera.rotation_from_angles(2.0, -math.pi / 2, -0.4)
        rec = camera.angles_from_rotation(R)
        assert rec.gimbal_lock
        R2 = camera.rotation_from_angles(*rec)
        assert np.linalg.norm(R - R2) < 1e-9

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            camera.angles_from_rotation(np.diag([1.0, 2.0, 1.0]))


class TestQuaternions:
    def test_identity(self):
        np.testing.assert_array_equal(camera.quat_from_rotation(np.eye(3)), [1, 0, 0, 0])

    def test_y_axis_half_angle(self):
        # axis-angle: q = (cos(phi/2), sin(phi/2)*axis); phi = pi/2 about y
        q = camera.quat_from_rotation(camera.rotation_y(math.pi / 2))
        expected = [math.sqrt(2) / 2, 0.0, math.sqrt(2) / 2, 0.0]
        np.testing.assert_allclose(q, expected, atol=1e-12)

    def test_sign_symmetry_and_canonicalization(self):
        rng = np.random.default_rng(3)
        R = random_rotation(rng)
        q = camera.quat_from_rotation(R)
        np.testing.assert_allclose(camera.rotation_from_quat(q), camera.rotation_from_quat(-q), atol=1e-12)
        assert q[0] >= 0
        np.testing.assert_array_equal(camera.canonical_quat(-q), q)

    def test_canonical_sign_zero_w(self):
        # 180 degrees about y: w == 0, first nonzero component made positive
        q = camera.quat_from_rotation(camera.rotation_y(math.pi))
        assert abs(q[0]) < 1e-12
        nonzero = q[np.abs(q) > 1e-12]
        assert nonzero[0] > 0

    def test_mutual_inverse_sweep(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            R = random_rotation(rng)
            q = camera.quat_from_rotation(R)
            assert abs(np.linalg.norm(q) - 1.0) < 1e-12
            np.testing.assert_allclose(camera.rotation_from_quat(q), R, atol=1e-9)

    def test_rotation_from_quat_rejects_non_unit(self):
        with pytest.raises(ValueError):
            camera.rotation_from_quat(np.array([1.0, 1.0, 0.0, 0.0]))


class TestProjectPoint:
    def test_origin_hits_principal_point(self):
        pose = camera.PoseParams(1.3, 0.4, -0.2, 5.0, 500.0, 112.0, 112.0)
        np.testing.assert_allclose(camera.project_point(pose, [0, 0, 0]), [112.0, 112.0], atol=1e-12)

    def test_pinhole_arithmetic(self):
        # frontal pose: X = (0.1, 0, 0) -> 500 * 0.1 / 5 + 112 = 122
        pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, 112.0, 112.0)
        np.testing.assert_allclose(camera.project_point(pose, [0.1, 0, 0]), [122.0, 112.0], atol=1e-12)

    def test_projective_scale_symmetry(self):
        rng = np.random.default_rng(9)
        pose = random_pose(rng)
        X = rng.uniform(-0.5, 0.5, size=3)
        lam = 3.7
        scaled = camera.PoseParams(
            pose.azimuth, pose.elevation, pose.theta, lam * pose.depth, pose.focal, pose.u, pose.v
        )
        np.testing.assert_allclose(
            camera.project_point(pose, X), camera.project_point(scaled, lam * X), atol=1e-9
        )

    def test_behind_camera(self):
        pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, 112.0, 112.0)
        with pytest.raises(camera.BehindCamera):
            camera.project_point(pose, [0, 0, -5.0])  # camera-frame z exactly 0
        with pytest.raises(camera.BehindCamera):
            camera.project_point(pose, [0, 0, -6.0])


class TestBuildProjection:
    def test_identity_pose_unit_camera(self):
        pose = camera.PoseParams(0, 0, 0, 1.0, 1.0, 0.0, 0.0)
        expected = np.hstack([np.eye(3), [[0.0], [0.0], [1.0]]])
        np.testing.assert_allclose(camera.build_projection(pose), expected, atol=1e-15)

    def test_matches_project_point(self):
        rng = np.random.default_rng(13)
        pose = random_pose(rng)
        P = camera.build_projection(pose)
        X = rng.uniform(-0.5, 0.5, size=(20, 3))
        np.testing.assert_allclose(
            camera.project_with_matrix(P, X), camera.project_points(pose, X), atol=1e-9
        )

    def test_camera_center_distance_sweep(self):
        # camera center C = -R^T T must sit at distance d from the origin
        rng = np.random.default_rng(17)
        for _ in range(1000):
            pose = random_pose(rng)
            R = camera.rotation_from_angles(*pose.angles())
            C = -R.T @ np.array([0.0, 0.0, pose.depth])
            assert np.linalg.norm(C) == pytest.approx(pose.depth, rel=1e-12)


class TestDecomposeProjection:
    def test_round_trip_random_pose(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            pose = random_pose(rng)
            rec = camera.decompose_projection(camera.build_projection(pose))
            assert rec.azimuth == pytest.approx(pose.azimuth, abs=1e-8)
            assert rec.elevation == pytest.approx(pose.elevation, abs=1e-8)
            assert rec.theta == pytest.approx(pose.theta, abs=1e-8)
            assert rec.depth == pytest.approx(pose.depth, rel=1e-8)
            assert rec.focal == pytest.approx(pose.focal, rel=1e-8)
            assert rec.u == pytest.approx(pose.u, abs=1e-6)
            assert rec.v == pytest.approx(pose.v, abs=1e-6)

    def test_homogeneous_scale_invariance(self):
        rng = np.random.default_rng(23)
        pose = random_pose(rng)
        P = camera.build_projection(pose)
        rec = camera.decompose_projection(7.0 * P)
        assert rec.depth == pytest.approx(pose.depth, rel=1e-9)
        rec_neg = camera.decompose_projection(-2.0 * P)
        assert rec_neg.focal == pytest.approx(pose.focal, rel=1e-9)

    def test_skew_rejected(self):
        pose = camera.PoseParams(0.5, 0.2, -0.1, 5.0, 500.0, 112.0, 112.0)
        K = camera.intrinsic_matrix(pose.focal, pose.u, pose.v)
        K[0, 1] = 5.0  # inject skew
        R = camera.rotation_from_angles(*pose.angles())
        P = np.hstack([K @ R, (K @ [0, 0, pose.depth]).reshape(3, 1)])
        with pytest.raises(camera.NotInFamily):
            camera.decompose_projection(P)

    def test_translation_off_axis_rejected(self):
        pose = camera.PoseParams(0.5, 0.2, -0.1, 5.0, 500.0, 112.0, 112.0)
        K = camera.intrinsic_matrix(pose.focal, pose.u, pose.v)
        R = camera.rotation_from_angles(*pose.angles())
        P = np.hstack([K @ R, (K @ [0.5, 0.0, pose.depth]).reshape(3, 1)])
        with pytest.raises(camera.NotInFamily):
            camera.decompose_projection(P)

    def test_garbage_rejected(self):
        with pytest.raises(camera.NotInFamily):
            camera.decompose_projection(np.zeros((3, 4)))


class TestOffsetTarget:
    def test_arithmetic(self):
        pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, 150.0, 80.0)
        roi = camera.BoundingBox2D(100.0, 50.0, 180.0, 90.0)  # center (140, 70)
        du, dv = camera.encode_offset_target(pose, roi)
        assert (du, dv) == (10.0, 10.0)

    def test_principal_point_at_center(self):
        roi = camera.BoundingBox2D(0.0, 0.0, 100.0, 60.0)
        pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, 50.0, 30.0)
        assert camera.encode_offset_target(pose, roi) == (0.0, 0.0)

    def test_round_trip_bit_exact_on_pixel_grid(self):
        # Values quantized to 1/256 px (annotation steps are far coarser):
        # all sums and differences stay exactly representable, so the
        # round trip is bit-exact by construction.
        rng = np.random.default_rng(29)
        for _ in range(1000):
            u, v = rng.integers(0, 2048 * 256, size=2) / 256.0
            x0, y0 = rng.integers(0, 1500 * 256, size=2) / 256.0
            w, h = rng.integers(1, 500 * 256, size=2) / 256.0
            pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, u, v)
            roi = camera.BoundingBox2D(x0, y0, x0 + w, y0 + h)
            du, dv = camera.encode_offset_target(pose, roi)
            assert camera.decode_offset_target(du, dv, roi) == (u, v)

    def test_round_trip_full_precision_within_one_ulp(self):
        # With arbitrary full-precision values the rounded difference can
        # land half an ulp away and ties-to-even may skip the original bit
        # pattern entirely, so one ulp is the attainable guarantee.
        rng = np.random.default_rng(31)
        for _ in range(2000):
            pose = random_pose(rng, frame=2048.0)
            x0, y0 = rng.uniform(0, 1500, size=2)
            roi = camera.BoundingBox2D(x0, y0, x0 + rng.uniform(1, 500), y0 + rng.uniform(1, 500))
            du, dv = camera.encode_offset_target(pose, roi)
            u, v = camera.decode_offset_target(du, dv, roi)
            assert abs(u - pose.u) <= math.ulp(pose.u)
            assert abs(v - pose.v) <= math.ulp(pose.v)


class TestProjectBbox:
    def test_frontal_cube_symmetric_about_principal_point(self):
        pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, 112.0, 96.0)
        corners = np.array(
            [[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)]
        )
        box = camera.project_bbox(pose, corners)
        cx, cy = box.center
        assert cx == pytest.approx(112.0, abs=1e-9)
        assert cy == pytest.approx(96.0, abs=1e-9)

    def test_degenerate_single_vertex_rejected(self):
        pose = camera.PoseParams(0, 0, 0, 5.0, 500.0, 112.0, 112.0)
        with pytest.raises(camera.DegenerateBox):
            camera.project_bbox(pose, np.array([[0.1, 0.2, 0.0]]))

    def test_tetrahedron_matches_per_vertex_projections(self):
        pose = camera.PoseParams(0.7, 0.2, -0.3, 6.0, 800.0, 250.0, 260.0)
        verts = np.array([[0, 0, 0], [0.4, 0, 0], [0, 0.3, 0], [0, 0, 0.5]], dtype=float)
        pix = np.array([camera.project_point(pose, v) for v in verts])
        box = camera.project_bbox(pose, verts)
        assert box.min_x == pytest.approx(pix[:, 0].min())
        assert box.max_x == pytest.approx(pix[:, 0].max())
        assert box.min_y == pytest.approx(pix[:, 1].min())
        assert box.max_y == pytest.approx(pix[:, 1].max())

    def test_behind_camera_vertex(self):
        pose = camera.PoseParams(0, 0, 0, 2.0, 500.0, 112.0, 112.0)
        verts = np.array([[0, 0, 0], [0, 0, -2.5]], dtype=float)
        with pytest.raises(camera.BehindCamera):
            camera.project_bbox(pose, verts)


class TestBoundingBox:
    def test_diameter(self):
        box = camera.BoundingBox2D(0.0, 0.0, 3.0, 4.0)
        assert box.diameter == 5.0

    def test_degenerate_rejected(self):
        with pytest.raises(camera.DegenerateBox):
            camera.BoundingBox2D(0.0, 0.0, 0.0, 4.0)

    def test_list_round_trip(self):
        box = camera.BoundingBox2D(1.5, 2.5, 10.0, 20.0)
        assert camera.BoundingBox2D.from_list(box.to_list()) == box
