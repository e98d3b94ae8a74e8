from __future__ import annotations

import numpy as np
import pytest

from anchorloc import CameraModel
from anchorloc.exception import DegenerateHomographyError, NoConvergenceError, PointBehindCameraError
from anchorloc.models import N_PARAMETERS, CameraParams, Distortion, Extrinsics, Intrinsics, Pixel2D, Position3D
from anchorloc.objects.camera_model import CameraStack, euler_angles
from anchorloc.objects.simulator import look_at

CENTER = np.array([0.0, -8.0, 4.0])
ROTATION, TRANSLATION = look_at(CENTER, np.array([1.5, 0.0, 0.0]))
INTRINSICS = Intrinsics(fx=800.0, fy=780.0, cx=640.0, cy=360.0)
DISTORTION = Distortion(k1=-0.2, k2=0.05, p1=1e-3, p2=-5e-4, k3=0.01)
CAMERA = CameraParams(
    id="cam00",
    intrinsics=INTRINSICS,
    extrinsics=Extrinsics.from_arrays(ROTATION, TRANSLATION),
    distortion=DISTORTION,
    image_size=(1280, 720),
)
POINT = Position3D(x=0.5, y=1.0, z=1.5)
STEP = 1e-6


def test_camera_center_is_recovered():
    np.testing.assert_allclose(CAMERA.center, CENTER, atol=1e-12)


def test_project_point_on_optical_axis_hits_principal_point():
    point = Position3D.from_array(CENTER + 5.0 * ROTATION[2])
    pixel = CameraModel().project(point, CAMERA)
    assert pixel.u == pytest.approx(640.0, abs=1e-9)
    assert pixel.v == pytest.approx(360.0, abs=1e-9)


def test_project_point_behind_camera_raises():
    point = Position3D.from_array(CENTER - ROTATION[2])
    with pytest.raises(PointBehindCameraError):
        CameraModel().project(point, CAMERA)


def test_project_stack_matches_single_camera_projection():
    camera_model = CameraModel()
    rotation, translation = look_at(np.array([6.0, 6.0, 3.0]), np.array([0.0, 0.0, 0.0]))
    other = CAMERA.model_copy(update={"id": "cam01", "extrinsics": Extrinsics.from_arrays(rotation, translation)})
    stacked = camera_model.project_stack(POINT.as_array(), CameraStack.of([CAMERA, other]))
    np.testing.assert_allclose(stacked[0], camera_model.project(POINT, CAMERA).as_array(), atol=1e-9)
    np.testing.assert_allclose(stacked[1], camera_model.project(POINT, other).as_array(), atol=1e-9)


def test_undistort_inverts_distort():
    camera_model = CameraModel()
    grid = np.linspace(-0.4, 0.4, 9)
    normalized = np.array([(x, y) for x in grid for y in grid])
    distorted = camera_model.distort(normalized, DISTORTION)
    np.testing.assert_allclose(camera_model.undistort(distorted, DISTORTION), normalized, atol=1e-9)


def test_undistort_without_distortion_is_identity():
    coordinates = np.array([0.3, -0.2])
    np.testing.assert_array_equal(CameraModel().undistort(coordinates, Distortion()), coordinates)


def test_undistort_raises_when_iteration_diverges():
    with pytest.raises(NoConvergenceError):
        CameraModel().undistort(np.array([1.0, 1.0]), Distortion(k1=5.0))


def test_pixel_to_plane_inverts_projection():
    camera_model = CameraModel()
    pixel = camera_model.project(POINT, CAMERA)
    ground = camera_model.pixel_to_plane(pixel, CAMERA, POINT.z)
    np.testing.assert_allclose(ground.as_array(), POINT.as_array(), atol=1e-8)


def test_pixel_to_plane_behind_camera_raises():
    with pytest.raises(PointBehindCameraError):
        CameraModel().pixel_to_plane(Pixel2D(u=640.0, v=360.0), CAMERA, 10.0)


def test_plane_through_camera_center_is_degenerate():
    with pytest.raises(DegenerateHomographyError):
        CameraModel().plane_homography(CAMERA, CENTER[2])


def test_back_project_principal_point():
    points = CameraModel().back_project(np.array([[640.0, 360.0]]), CAMERA, 10.0)
    np.testing.assert_allclose(points[0], CENTER + 10.0 * ROTATION[2], atol=1e-9)


def test_point_jacobian_matches_finite_differences():
    camera_model = CameraModel()
    analytic = camera_model.jacobians(POINT, CAMERA).d_pixel_d_x
    numeric = np.zeros((2, 3))
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = STEP
        plus = camera_model.project_points(POINT.as_array() + offset, CAMERA)[0]
        minus = camera_model.project_points(POINT.as_array() - offset, CAMERA)[0]
        numeric[:, axis] = (plus - minus) / (2.0 * STEP)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5)


def test_parameter_jacobian_matches_finite_differences():
    camera_model = CameraModel()
    analytic = camera_model.jacobians(POINT, CAMERA).d_pixel_d_h
    numeric = np.zeros((2, N_PARAMETERS))
    for index in range(N_PARAMETERS):
        increment = np.zeros(N_PARAMETERS)
        increment[index] = STEP
        plus = camera_model.project(POINT, camera_model.apply_increment(CAMERA, increment)).as_array()
        minus = camera_model.project(POINT, camera_model.apply_increment(CAMERA, -increment)).as_array()
        numeric[:, index] = (plus - minus) / (2.0 * STEP)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5)


def test_apply_increment_zero_keeps_camera():
    moved = CameraModel().apply_increment(CAMERA, np.zeros(N_PARAMETERS))
    np.testing.assert_allclose(moved.rotation_matrix, CAMERA.rotation_matrix, atol=1e-12)
    np.testing.assert_allclose(moved.translation_vector, CAMERA.translation_vector, atol=1e-12)
    np.testing.assert_allclose(moved.distortion_vector, CAMERA.distortion_vector)
    np.testing.assert_allclose(moved.intrinsics_vector, CAMERA.intrinsics_vector)


def test_apply_increment_moves_pitch_only():
    increment = np.zeros(N_PARAMETERS)
    increment[0] = 0.01
    moved = CameraModel().apply_increment(CAMERA, increment)
    change = euler_angles(moved.rotation_matrix) - euler_angles(CAMERA.rotation_matrix)
    np.testing.assert_allclose(change, [0.01, 0.0, 0.0], atol=1e-12)


def test_visible_mask():
    points = np.array(
        [
            CENTER + 5.0 * ROTATION[2],
            CENTER - 5.0 * ROTATION[2],
            CENTER + 5.0 * ROTATION[2] + 50.0 * ROTATION[0],
        ],
    )
    mask = CameraModel().visible_mask(points, CAMERA)
    assert mask.tolist() == [True, False, False]


def test_is_visible():
    camera_model = CameraModel()
    assert camera_model.is_visible(Position3D.from_array(CENTER + 5.0 * ROTATION[2]), CAMERA)
    assert not camera_model.is_visible(Position3D.from_array(CENTER - 5.0 * ROTATION[2]), CAMERA)


def test_is_visible_one_pixel_outside_the_border():
    camera_model = CameraModel()
    pinhole = CAMERA.model_copy(update={"distortion": Distortion()})
    inside = np.array([[0.5, 360.0], [1278.5, 360.0], [640.0, 0.5], [640.0, 718.5]])
    outside = np.array([[-1.0, 360.0], [1280.0, 360.0], [640.0, -1.0], [640.0, 720.0]])
    for pixel in inside:
        point = Position3D.from_array(camera_model.back_project(pixel[None, :], pinhole, 6.0)[0])
        assert camera_model.is_visible(point, pinhole)
    for pixel in outside:
        point = Position3D.from_array(camera_model.back_project(pixel[None, :], pinhole, 6.0)[0])
        assert not camera_model.is_visible(point, pinhole)


def test_nadir_homography_matches_closed_form():
    rotation = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    center = np.array([2.0, 3.0, 5.0])
    nadir = CAMERA.model_copy(
        update={"extrinsics": Extrinsics.from_arrays(rotation, -rotation @ center), "distortion": Distortion()},
    )
    for plane_height in (0.0, 1.7):
        homography = CameraModel().plane_homography(nadir, plane_height)
        depth = center[2] - plane_height
        for u, v in ((640.0, 360.0), (100.0, 50.0), (1200.0, 700.0)):
            ground = homography @ np.array([u, v, 1.0])
            expected = [center[0] + (u - 640.0) * depth / 800.0, center[1] - (v - 360.0) * depth / 780.0]
            np.testing.assert_allclose(ground[:2] / ground[2], expected, atol=1e-9)


def random_cameras_and_points(count, seed):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        center = np.array([8.0 * np.cos(angle), 8.0 * np.sin(angle), rng.uniform(2.5, 6.0)])
        rotation, translation = look_at(center, rng.uniform(-2.0, 2.0, size=3) * [1.0, 1.0, 0.0])
        focal = rng.uniform(500.0, 1200.0)
        cam = CameraParams(
            id="cam",
            intrinsics=Intrinsics(fx=focal, fy=focal * rng.uniform(0.95, 1.05), cx=640.0, cy=360.0),
            extrinsics=Extrinsics.from_arrays(rotation, translation),
            distortion=Distortion.from_array(rng.normal(0.0, [0.1, 0.02, 1e-3, 1e-3, 5e-3])),
            image_size=(1280, 720),
        )
        depth = rng.uniform(3.0, 15.0)
        cam_point = depth * np.array([*rng.uniform(-0.5, 0.5, size=2), 1.0])
        pairs.append((cam, Position3D.from_array((cam_point - translation) @ rotation)))
    return pairs


def test_jacobians_match_finite_differences_on_random_cameras():
    camera_model = CameraModel()
    for cam, point in random_cameras_and_points(100, seed=11):
        jacobians = camera_model.jacobians(point, cam)
        numeric_x = np.zeros((2, 3))
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = STEP
            plus = camera_model.project_points(point.as_array() + offset, cam)[0]
            minus = camera_model.project_points(point.as_array() - offset, cam)[0]
            numeric_x[:, axis] = (plus - minus) / (2.0 * STEP)
        numeric_h = np.zeros((2, N_PARAMETERS))
        for index in range(N_PARAMETERS):
            increment = np.zeros(N_PARAMETERS)
            increment[index] = STEP
            plus = camera_model.project(point, camera_model.apply_increment(cam, increment)).as_array()
            minus = camera_model.project(point, camera_model.apply_increment(cam, -increment)).as_array()
            numeric_h[:, index] = (plus - minus) / (2.0 * STEP)
        for analytic, numeric in ((jacobians.d_pixel_d_x, numeric_x), (jacobians.d_pixel_d_h, numeric_h)):
            assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-5


def test_projection_matches_opencv():
    cv2 = pytest.importorskip("cv2")
    camera_model = CameraModel()
    for cam, _ in random_cameras_and_points(5, seed=3):
        rng = np.random.default_rng(7)
        depth = rng.uniform(3.0, 15.0, size=50)
        cam_points = depth[:, None] * np.column_stack((rng.uniform(-0.5, 0.5, size=(50, 2)), np.ones(50)))
        world = (cam_points - cam.translation_vector) @ cam.rotation_matrix
        fx, fy, cx, cy = cam.intrinsics_vector
        matrix = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        rvec, _ = cv2.Rodrigues(cam.rotation_matrix)
        expected, _ = cv2.projectPoints(world, rvec, cam.translation_vector, matrix, cam.distortion_vector)
        np.testing.assert_allclose(camera_model.project_points(world, cam), expected.reshape(-1, 2), atol=1e-6)


def test_distort_matches_opencv():
    cv2 = pytest.importorskip("cv2")
    grid = np.linspace(-0.6, 0.6, 7)
    normalized = np.array([(x, y) for x in grid for y in grid])
    object_points = np.column_stack((normalized, np.ones(len(normalized))))
    expected, _ = cv2.projectPoints(object_points, np.zeros(3), np.zeros(3), np.eye(3), DISTORTION.as_array())
    np.testing.assert_allclose(CameraModel().distort(normalized, DISTORTION), expected.reshape(-1, 2), atol=1e-12)
