"""
Imaging function f(x, h): world point -> camera frame -> normalized plane -> lens distortion -> pixel.

The camera transform is c = R x + T with R mapping world to camera axes. Normalized
coordinates are r = (c1 / c3, c2 / c3). Distortion uses the five coefficients
[k1, k2, p1, p2, k3] with s = r1^2 + r2^2:

    r1' = r1 (1 + k1 s + k2 s^2 + k3 s^3) + 2 p1 r1 r2 + p2 (s + 2 r1^2)
    r2' = r2 (1 + k1 s + k2 s^2 + k3 s^3) + p1 (s + 2 r2^2) + 2 p2 r1 r2

and the pixel is (fx r1' + cx, fy r2' + cy).

Perturbable parameters are ordered as in ``PARAMETER_NAMES``. Rotation enters through
increments of the extrinsic "xyz" Euler angles of R, composed R = Rz(roll) Ry(yaw) Rx(pitch).
"""
from __future__ import annotations

import logging
from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from anchorloc.exception import DegenerateHomographyError, NoConvergenceError, PointBehindCameraError
from anchorloc.models.camera import N_PARAMETERS, CameraParams, Distortion, Pixel2D, Position3D, ProjectionJacobians
from anchorloc.objects.object import AnchorLocObject

logger = logging.getLogger("anchorloc")

EULER_SEQUENCE = "xyz"
_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])

DistortionLike = Union[Distortion, Sequence[float], np.ndarray]


class CameraStack(NamedTuple):
    """Parameter arrays of several cameras, one row per camera."""

    ids: Tuple[str, ...]
    rotation: np.ndarray
    translation: np.ndarray
    intrinsics: np.ndarray
    distortion: np.ndarray

    @classmethod
    def of(cls, cams: Sequence[CameraParams]) -> CameraStack:
        return cls(
            ids=tuple(cam.id for cam in cams),
            rotation=np.array([cam.rotation_matrix for cam in cams]).reshape(-1, 3, 3),
            translation=np.array([cam.translation_vector for cam in cams]).reshape(-1, 3),
            intrinsics=np.array([cam.intrinsics_vector for cam in cams]).reshape(-1, 4),
            distortion=np.array([cam.distortion_vector for cam in cams]).reshape(-1, 5),
        )


def _coefficients(d: DistortionLike) -> np.ndarray:
    if isinstance(d, Distortion):
        return d.as_array()
    return np.asarray(d, dtype=float).reshape(5)


def distort_array(r: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """
    Apply lens distortion to normalized coordinates.
    :param r: (N, 2) normalized coordinates
    :param coefficients: [k1, k2, p1, p2, k3], or one row of them per point
    :return: (N, 2) distorted normalized coordinates
    """
    k1, k2, p1, p2, k3 = np.moveaxis(np.asarray(coefficients, dtype=float), -1, 0)
    r1 = r[:, 0]
    r2 = r[:, 1]
    s = r1 * r1 + r2 * r2
    radial = 1.0 + s * (k1 + s * (k2 + s * k3))
    out = np.empty_like(r)
    out[:, 0] = r1 * radial + 2.0 * p1 * r1 * r2 + p2 * (s + 2.0 * r1 * r1)
    out[:, 1] = r2 * radial + p1 * (s + 2.0 * r2 * r2) + 2.0 * p2 * r1 * r2
    return out


def distort_jacobian(r: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """(N, 2, 2) derivative of distort_array with respect to r."""
    k1, k2, p1, p2, k3 = np.moveaxis(np.asarray(coefficients, dtype=float), -1, 0)
    r1 = r[:, 0]
    r2 = r[:, 1]
    s = r1 * r1 + r2 * r2
    radial = 1.0 + s * (k1 + s * (k2 + s * k3))
    d_radial = k1 + s * (2.0 * k2 + 3.0 * k3 * s)
    cross = 2.0 * r1 * r2 * d_radial + 2.0 * p1 * r1 + 2.0 * p2 * r2
    jac = np.empty((r.shape[0], 2, 2))
    jac[:, 0, 0] = radial + 2.0 * r1 * r1 * d_radial + 2.0 * p1 * r2 + 6.0 * p2 * r1
    jac[:, 0, 1] = cross
    jac[:, 1, 0] = cross
    jac[:, 1, 1] = radial + 2.0 * r2 * r2 * d_radial + 6.0 * p1 * r2 + 2.0 * p2 * r1
    return jac


def _pixel_chain(
    cam_points: np.ndarray,
    intrinsics: np.ndarray,
    distortion: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Pixels, their (N, 2, 3) derivative with respect to camera-frame points, normalized and distorted coordinates."""
    depth = cam_points[:, 2]
    normalized = cam_points[:, :2] / depth[:, None]
    distorted = distort_array(normalized, distortion)
    focal = intrinsics[..., 0:2]
    pixels = distorted * focal + intrinsics[..., 2:4]

    d_norm_d_cam = np.zeros((cam_points.shape[0], 2, 3))
    d_norm_d_cam[:, 0, 0] = 1.0 / depth
    d_norm_d_cam[:, 1, 1] = 1.0 / depth
    d_norm_d_cam[:, :, 2] = -normalized / depth[:, None]
    d_pixel_d_norm = focal[..., :, None] * distort_jacobian(normalized, distortion)
    return pixels, d_pixel_d_norm @ d_norm_d_cam, normalized, distorted


def _rx(angle: float) -> np.ndarray:
    cos, sin = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, cos, -sin], [0.0, sin, cos]])


def euler_angles(rotation: np.ndarray) -> np.ndarray:
    """[pitch, yaw, roll] in radians of a world to camera rotation."""
    return Rotation.from_matrix(rotation).as_euler(EULER_SEQUENCE)


def rotation_from_euler(angles: np.ndarray) -> np.ndarray:
    return Rotation.from_euler(EULER_SEQUENCE, angles).as_matrix()


class CameraModel(AnchorLocObject):
    """Models the imaging process of calibrated cameras."""

    def _check_depth(self, depth: np.ndarray, camera_ids: Sequence[str]) -> None:
        behind = np.flatnonzero(depth <= self._numerics.depth_epsilon)
        if behind.size:
            camera_id = camera_ids[int(behind[0]) % len(camera_ids)]
            logger.error("Point behind camera %s", camera_id)
            raise PointBehindCameraError(f"Point has no positive depth in camera {camera_id}")

    def _camera_points(self, points: np.ndarray, cam: CameraParams) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cam_points = points @ cam.rotation_matrix.T + cam.translation_vector
        self._check_depth(cam_points[:, 2], [cam.id])
        return cam_points

    def project_points(self, points: np.ndarray, cam: CameraParams) -> np.ndarray:
        """
        Project world points to pixels.
        :param points: (N, 3) world coordinates in meters
        :param cam: Camera parameters
        :return: (N, 2) pixels
        """
        cam_points = self._camera_points(points, cam)
        normalized = cam_points[:, :2] / cam_points[:, 2:3]
        distorted = distort_array(normalized, cam.distortion_vector)
        intrinsics = cam.intrinsics_vector
        return distorted * intrinsics[0:2] + intrinsics[2:4]

    def project(self, point: Position3D, cam: CameraParams) -> Pixel2D:
        """
        Project one world point.
        :param point: World point
        :param cam: Camera parameters
        :return: Pixel
        """
        return Pixel2D.from_array(self.project_points(point.as_array(), cam)[0])

    def project_stack(self, point: np.ndarray, stack: CameraStack) -> np.ndarray:
        """
        Project one world point into several cameras.
        :param point: (3,) world point
        :param stack: Camera arrays
        :return: (m, 2) pixels in stack order
        """
        cam_points = np.einsum("mij,j->mi", stack.rotation, np.asarray(point, dtype=float)) + stack.translation
        self._check_depth(cam_points[:, 2], stack.ids)
        normalized = cam_points[:, :2] / cam_points[:, 2:3]
        distorted = distort_array(normalized, stack.distortion)
        return distorted * stack.intrinsics[:, 0:2] + stack.intrinsics[:, 2:4]

    def stack_jacobians(self, point: np.ndarray, stack: CameraStack) -> Tuple[np.ndarray, np.ndarray]:
        """
        :param point: (3,) world point
        :param stack: Camera arrays
        :return: (m, 2) pixels and their (m, 2, 3) derivatives with respect to the point
        """
        cam_points = np.einsum("mij,j->mi", stack.rotation, np.asarray(point, dtype=float)) + stack.translation
        self._check_depth(cam_points[:, 2], stack.ids)
        pixels, d_pixel_d_cam, _, _ = _pixel_chain(cam_points, stack.intrinsics, stack.distortion)
        return pixels, d_pixel_d_cam @ stack.rotation

    def distort(self, normalized: np.ndarray, d: DistortionLike) -> np.ndarray:
        """
        :param normalized: (2,) or (N, 2) undistorted normalized coordinates
        :param d: Distortion coefficients
        :return: Distorted coordinates with the input shape
        """
        array = np.asarray(normalized, dtype=float)
        return distort_array(np.atleast_2d(array), _coefficients(d)).reshape(array.shape)

    def undistort(self, distorted: np.ndarray, d: DistortionLike) -> np.ndarray:
        """
        Invert the distortion by the fixed-point iteration r <- r - (distort(r) - r_d).
        :param distorted: (2,) or (N, 2) distorted normalized coordinates
        :param d: Distortion coefficients
        :return: Undistorted coordinates with the input shape
        """
        array = np.asarray(distorted, dtype=float)
        coefficients = _coefficients(d)
        if not np.any(coefficients):
            return array.copy()
        target = np.atleast_2d(array)
        estimate = target.copy()
        tol = self._numerics.undistort_tol
        for _ in range(self._numerics.max_undistort_iters + 1):
            error = distort_array(estimate, coefficients) - target
            worst = np.max(np.abs(error))
            if worst < tol:
                return estimate.reshape(array.shape)
            if not np.isfinite(worst):
                break
            estimate = estimate - error
        logger.error("Undistortion did not converge within %d iterations", self._numerics.max_undistort_iters)
        raise NoConvergenceError(f"Undistortion did not reach {tol} in {self._numerics.max_undistort_iters} iterations")

    def normalize_pixels(self, pixels: np.ndarray, cam: CameraParams) -> np.ndarray:
        """Undistorted normalized coordinates of (N, 2) pixels."""
        intrinsics = cam.intrinsics_vector
        distorted = (np.atleast_2d(np.asarray(pixels, dtype=float)) - intrinsics[2:4]) / intrinsics[0:2]
        return self.undistort(distorted, cam.distortion_vector)

    def plane_homography(self, cam: CameraParams, plane_height: float) -> np.ndarray:
        """
        Homography from undistorted homogeneous pixels to world (x, y, 1) on the plane z = plane_height.
        :param cam: Camera parameters
        :param plane_height: Height of the plane in meters
        :return: 3x3 matrix
        """
        fx, fy, cx, cy = cam.intrinsics_vector
        intrinsic = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        rotation = cam.rotation_matrix
        plane_to_camera = np.column_stack(
            (rotation[:, 0], rotation[:, 1], rotation[:, 2] * plane_height + cam.translation_vector),
        )
        forward = intrinsic @ plane_to_camera
        condition = np.linalg.cond(forward)
        if not np.isfinite(condition) or condition > self._numerics.cond_max:
            logger.error("Camera %s is degenerate with the plane z=%s", cam.id, plane_height)
            raise DegenerateHomographyError(
                f"Camera {cam.id} plane system condition {condition:.3g} exceeds {self._numerics.cond_max:.3g}",
            )
        return np.linalg.inv(forward)

    def pixel_to_plane(self, pixel: Pixel2D, cam: CameraParams, plane_height: float) -> Position3D:
        """
        Intersect the viewing ray of a (distorted) pixel with the plane z = plane_height.
        :param pixel: Observed pixel
        :param cam: Camera parameters
        :param plane_height: Height of the plane in meters
        :return: World point on the plane
        """
        normalized = self.normalize_pixels(pixel.as_array(), cam)[0]
        fx, fy, cx, cy = cam.intrinsics_vector
        undistorted = np.array([fx * normalized[0] + cx, fy * normalized[1] + cy, 1.0])
        plane = self.plane_homography(cam, plane_height) @ undistorted
        # plane[2] is the inverse depth of the intersection
        if plane[2] <= 0.0 or plane[2] * self._numerics.depth_epsilon >= 1.0:
            logger.error("Ray of camera %s meets the plane behind the camera", cam.id)
            raise PointBehindCameraError(f"Ray of camera {cam.id} does not meet z={plane_height} in front")
        return Position3D(x=float(plane[0] / plane[2]), y=float(plane[1] / plane[2]), z=float(plane_height))

    def back_project(self, pixels: np.ndarray, cam: CameraParams, depth: float) -> np.ndarray:
        """
        World points at a given depth along the viewing rays of pixels.
        :param pixels: (N, 2) pixels
        :param cam: Camera parameters
        :param depth: Depth along the optical axis in meters
        :return: (N, 3) world points
        """
        normalized = self.normalize_pixels(pixels, cam)
        cam_points = depth * np.column_stack((normalized, np.ones(normalized.shape[0])))
        return (cam_points - cam.translation_vector) @ cam.rotation_matrix

    def jacobians(self, point: Position3D, cam: CameraParams) -> ProjectionJacobians:
        """
        Analytic derivatives of the projected pixel.
        :param point: World point
        :param cam: Camera parameters
        :return: d pixel / d x (2x3) and d pixel / d h (2x15, PARAMETER_NAMES order)
        """
        world = point.as_array()
        rotation = cam.rotation_matrix
        cam_points = self._camera_points(world, cam)
        _, d_pixel_d_cam, normalized, distorted = _pixel_chain(cam_points, cam.intrinsics_vector, cam.distortion_vector)
        d_cam = d_pixel_d_cam[0]
        fx, fy, _, _ = cam.intrinsics_vector
        r1, r2 = normalized[0]
        r1d, r2d = distorted[0]
        s = r1 * r1 + r2 * r2

        pitch = euler_angles(rotation)[0]
        d_cam_d_angles = np.column_stack(
            (
                rotation @ np.cross(_EX, world),
                rotation @ np.cross(_rx(pitch).T @ _EY, world),
                np.cross(_EZ, rotation @ world),
            ),
        )
        d_dist = np.array(
            [
                [r1 * s, r1 * s * s, 2.0 * r1 * r2, s + 2.0 * r1 * r1, r1 * s * s * s],
                [r2 * s, r2 * s * s, s + 2.0 * r2 * r2, 2.0 * r1 * r2, r2 * s * s * s],
            ],
        ) * np.array([[fx], [fy]])
        d_intrinsics = np.array([[r1d, 0.0, 1.0, 0.0], [0.0, r2d, 0.0, 1.0]])

        d_pixel_d_h = np.zeros((2, N_PARAMETERS))
        d_pixel_d_h[:, 0:3] = d_cam @ d_cam_d_angles
        d_pixel_d_h[:, 3:6] = d_cam
        d_pixel_d_h[:, 6:11] = d_dist
        d_pixel_d_h[:, 11:15] = d_intrinsics
        return ProjectionJacobians(d_pixel_d_x=d_cam @ rotation, d_pixel_d_h=d_pixel_d_h)

    def apply_increment(self, cam: CameraParams, increment: Sequence[float]) -> CameraParams:
        """
        Move a camera along the perturbable parameter vector.
        :param cam: Camera parameters
        :param increment: 15 increments in PARAMETER_NAMES order (angles in radians)
        :return: The perturbed camera
        """
        delta = np.asarray(increment, dtype=float).reshape(N_PARAMETERS)
        angles = euler_angles(cam.rotation_matrix) + delta[0:3]
        return cam.replace(
            rotation=rotation_from_euler(angles),
            translation=cam.translation_vector + delta[3:6],
            distortion=cam.distortion_vector + delta[6:11],
            intrinsics=cam.intrinsics_vector + delta[11:15],
        )

    def visible_mask(self, points: np.ndarray, cam: CameraParams) -> np.ndarray:
        """
        :param points: (N, 3) world points
        :param cam: Camera parameters
        :return: (N,) booleans, True where the point has positive depth and projects inside the image
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        depth = (points @ cam.rotation_matrix.T + cam.translation_vector)[:, 2]
        mask = depth > self._numerics.depth_epsilon
        if not np.any(mask):
            return mask
        pixels = self.project_points(points[mask], cam)
        margin = self._numerics.margin_px
        width, height = cam.image_size
        inside = (
            (pixels[:, 0] >= margin)
            & (pixels[:, 0] <= width - 1 - margin)
            & (pixels[:, 1] >= margin)
            & (pixels[:, 1] <= height - 1 - margin)
        )
        mask[np.flatnonzero(mask)] = inside
        return mask

    def is_visible(self, point: Position3D, cam: CameraParams) -> bool:
        """
        Occlusion is not modeled.
        :param point: World point
        :param cam: Camera parameters
        :return: True if the point is in front of the camera and inside the image
        """
        return bool(self.visible_mask(point.as_array(), cam)[0])
