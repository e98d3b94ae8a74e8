from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from anchorloc.exception import FovSamplingExhaustedError
from anchorloc.models.anchor import Anchor
from anchorloc.models.camera import N_PARAMETERS, CameraParams, Distortion, Extrinsics, Intrinsics, Pixel2D, Position3D
from anchorloc.models.config import NumericsConfig
from anchorloc.models.observation import FrameObservations, ObservationEntry, RepresentativeEnum
from anchorloc.models.simulation import (
    CameraLayout,
    GroundTruthTrajectory,
    NoiseSpec,
    PerturbationSpec,
    SceneSpec,
    SignModeEnum,
    SimulatedScene,
)
from anchorloc.objects.camera_model import CameraModel
from anchorloc.objects.object import AnchorLocObject
from anchorloc.utils import (
    STREAM_ANCHORS,
    STREAM_OBSERVATIONS,
    STREAM_PERTURBATION,
    STREAM_TRAJECTORIES,
    seed_streams,
)

logger = logging.getLogger("anchorloc")

# Candidates tested per vectorised rejection round.
ANCHOR_BATCH = 256
_UP = np.array([0.0, 0.0, 1.0])


def _fold(values: np.ndarray, upper: float) -> np.ndarray:
    """Reflect values into [0, upper]."""
    period = 2.0 * upper
    wrapped = np.mod(values, period)
    return np.where(wrapped > upper, period - wrapped, wrapped)


def _perimeter_point(arc: float, length: float, width: float) -> Tuple[float, float]:
    if arc < length:
        return arc, 0.0
    arc -= length
    if arc < width:
        return length, arc
    arc -= width
    if arc < length:
        return length - arc, width
    return 0.0, width - (arc - length)


def look_at(center: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    World to camera transform of a camera at `center` whose optical axis passes through `target`.
    :param center: Camera center in world coordinates
    :param target: Point to look at
    :return: Rotation and translation with image x to the right and image y downwards
    """
    forward = target - center
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, _UP)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.vstack((right, down, forward))
    return rotation, -rotation @ center


class Simulator(AnchorLocObject):
    """Models synthetic scenes, observations and calibration errors."""

    def __init__(self, numerics: Optional[NumericsConfig] = None, camera_model: Optional[CameraModel] = None) -> None:
        super().__init__(numerics)
        self._camera_model = camera_model if camera_model is not None else CameraModel(self._numerics)

    def build_cameras(self, scene: SceneSpec) -> List[CameraParams]:
        """
        Ground-truth cameras of a scene, sorted by id.
        :param scene: Scene spec with explicit cameras or a layout
        :return: Cameras
        """
        if scene.cameras:
            cams = [record.to_params() for record in scene.cameras]
        else:
            cams = self._layout_cameras(scene.extent, scene.layout)  # type: ignore[arg-type]
        logger.debug("Scene has %d cameras", len(cams))
        return sorted(cams, key=lambda cam: cam.id)

    @staticmethod
    def _layout_cameras(extent: Tuple[float, float], layout: CameraLayout) -> List[CameraParams]:
        length, width = extent
        middle = np.array([length / 2.0, width / 2.0])
        spacing = 2.0 * (length + width) / layout.count
        image_width, image_height = layout.image_size
        intrinsics = Intrinsics(fx=layout.focal_px, fy=layout.focal_px, cx=image_width / 2.0, cy=image_height / 2.0)
        cams = []
        for index in range(layout.count):
            ground = np.array(_perimeter_point((index + 0.5) * spacing, length, width))
            heading = (middle - ground) / np.linalg.norm(middle - ground)
            target = np.append(ground + layout.look_ahead * heading, 0.0)
            rotation, translation = look_at(np.append(ground, layout.mount_height), target)
            cams.append(
                CameraParams(
                    id=f"cam{index:02d}",
                    intrinsics=intrinsics,
                    extrinsics=Extrinsics.from_arrays(rotation, translation),
                    distortion=Distortion.from_array(layout.distortion),
                    image_size=layout.image_size,
                ),
            )
        return cams

    def simulate_trajectories(
        self,
        scene: SceneSpec,
        n_targets: Optional[int] = None,
        n_frames: Optional[int] = None,
        step_sigma: Optional[float] = None,
        rng: Optional[np.random.Generator] = None,
        starts: Optional[Sequence[Tuple[float, float]]] = None,
    ) -> List[GroundTruthTrajectory]:
        """
        Gaussian random walks on the ground plane, reflected at the scene boundary.
        :param scene: Scene spec, supplies the defaults
        :param n_targets: Number of targets
        :param n_frames: Frames per target
        :param step_sigma: Step standard deviation per axis (meters per frame)
        :param rng: Generator, defaults to the scene's trajectory stream
        :param starts: Optional start point per target, uniform in the extent otherwise
        :return: One trajectory per target
        """
        n_targets = scene.n_targets if n_targets is None else n_targets
        n_frames = scene.n_frames if n_frames is None else n_frames
        step_sigma = scene.step_sigma if step_sigma is None else step_sigma
        rng = rng if rng is not None else seed_streams(scene.rng_seed)[STREAM_TRAJECTORIES]
        extent = np.array(scene.extent, dtype=float)

        trajectories = []
        for index in range(n_targets):
            start = rng.uniform(0.0, 1.0, size=2) * extent
            if starts is not None:
                start = np.asarray(starts[index], dtype=float)
            height = float(rng.uniform(scene.height_min, scene.height_max))
            steps = rng.normal(0.0, 1.0, size=(n_frames - 1, 2)) * step_sigma
            free = np.vstack((start, start + np.cumsum(steps, axis=0)))
            xs = _fold(free[:, 0], extent[0])
            ys = _fold(free[:, 1], extent[1])
            trajectories.append(
                GroundTruthTrajectory(
                    target_id=f"t{index:03d}",
                    height=height,
                    positions=[Position3D(x=float(x), y=float(y), z=0.0) for x, y in zip(xs, ys)],
                ),
            )
        logger.debug("Simulated %d trajectories of %d frames", n_targets, n_frames)
        return trajectories

    def sample_anchors(
        self,
        scene: SceneSpec,
        cam: CameraParams,
        n: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> List[Anchor]:
        """
        Rejection-sample anchors in the field of view of a ground-truth camera.
        :param scene: Scene spec, supplies extent, anchor heights, noise and the reject budget
        :param cam: Ground-truth camera
        :param n: Number of anchors, defaults to anchors_per_camera
        :param rng: Generator, defaults to the scene's anchor stream
        :return: Anchors with observed pixels
        """
        n = scene.anchors_per_camera if n is None else n
        rng = rng if rng is not None else seed_streams(scene.rng_seed)[STREAM_ANCHORS]
        low = np.zeros(3)
        high = np.array([scene.extent[0], scene.extent[1], scene.anchor_height_max])
        accepted: List[np.ndarray] = []
        drawn = 0
        while len(accepted) < n:
            if drawn - len(accepted) >= scene.max_rejects:
                logger.error("Anchor sampling for camera %s exhausted after %d draws", cam.id, drawn)
                raise FovSamplingExhaustedError(
                    f"Found {len(accepted)} of {n} anchors for camera {cam.id} in {drawn} draws",
                )
            candidates = rng.uniform(low, high, size=(ANCHOR_BATCH, 3))
            mask = self._camera_model.visible_mask(candidates, cam)
            for candidate, visible in zip(candidates, mask):
                drawn += 1
                if visible:
                    accepted.append(candidate)
                    if len(accepted) == n:
                        break
                elif drawn - len(accepted) >= scene.max_rejects:
                    break

        world = np.array(accepted)
        pixels = self._camera_model.project_points(world, cam)
        pixels = pixels + rng.normal(0.0, 1.0, size=pixels.shape) * scene.noise.anchor_pixel_sigma
        logger.debug("Sampled %d anchors for camera %s in %d draws", n, cam.id, drawn)
        return [
            Anchor(
                camera_id=cam.id,
                anchor_id=f"{cam.id}_a{index:02d}",
                world=Position3D.from_array(point),
                observed_pixel=Pixel2D.from_array(pixel),
            )
            for index, (point, pixel) in enumerate(zip(world, pixels))
        ]

    def perturb_cameras(
        self,
        cams: Sequence[CameraParams],
        spec: PerturbationSpec,
        seed: int = 0,
        rng: Optional[np.random.Generator] = None,
    ) -> List[CameraParams]:
        """
        Calibration errors: additive pitch and yaw, a translation of fixed length in a uniform
        direction, and relative distortion errors. Roll and intrinsics are kept.
        :param cams: Ground-truth cameras
        :param spec: Error magnitudes and sign mode
        :param seed: Seed used when no generator is given
        :param rng: Generator, defaults to the perturbation stream of `seed`
        :return: Perturbed cameras in the input order
        """
        if spec.is_zero:
            return list(cams)
        rng = rng if rng is not None else seed_streams(seed)[STREAM_PERTURBATION]
        perturbed = []
        for cam in cams:
            signs = rng.choice([-1.0, 1.0], size=7)
            direction = rng.normal(0.0, 1.0, size=3)
            if spec.sign_mode == SignModeEnum.positive:
                signs = np.ones(7)
            elif spec.sign_mode == SignModeEnum.negative:
                signs = -np.ones(7)
            increment = np.zeros(N_PARAMETERS)
            increment[0] = signs[0] * np.deg2rad(spec.rx_deg)
            increment[1] = signs[1] * np.deg2rad(spec.ry_deg)
            increment[3:6] = spec.t_m * direction / np.linalg.norm(direction)
            increment[6:11] = signs[2:7] * spec.d_rel * cam.distortion_vector
            perturbed.append(self._camera_model.apply_increment(cam, increment))
        logger.debug("Perturbed %d cameras with %s", len(perturbed), spec.label)
        return perturbed

    def render_observations(
        self,
        traj: GroundTruthTrajectory,
        cams_true: Sequence[CameraParams],
        noise: NoiseSpec,
        representative: RepresentativeEnum = RepresentativeEnum.head,
        rng: Optional[np.random.Generator] = None,
        max_visible: Optional[int] = None,
    ) -> List[FrameObservations]:
        """
        Observations of one target in every frame.
        :param traj: Ground-truth trajectory
        :param cams_true: Ground-truth cameras
        :param noise: Pixel noise
        :param representative: HEAD renders the head position, ANKLE the ground position
        :param rng: Generator, defaults to a fresh observation stream of seed 0
        :param max_visible: Keep at most this many visible cameras per frame, lowest ids first
        :return: One record per frame, with an entry for every camera
        """
        rng = rng if rng is not None else seed_streams(0)[STREAM_OBSERVATIONS]
        cams = sorted(cams_true, key=lambda cam: cam.id)
        points = np.array([position.as_array() for position in traj.representative_positions(representative)])
        n_frames = points.shape[0]
        visible = np.zeros((len(cams), n_frames), dtype=bool)
        pixels = np.zeros((len(cams), n_frames, 2))
        for index, cam in enumerate(cams):
            jitter = rng.normal(0.0, 1.0, size=(n_frames, 2)) * noise.pixel_sigma
            visible[index] = self._camera_model.visible_mask(points, cam)
            if np.any(visible[index]):
                pixels[index, visible[index]] = self._camera_model.project_points(points[visible[index]], cam)
            pixels[index] += jitter
        if max_visible is not None:
            visible &= np.cumsum(visible, axis=0) <= max_visible

        frames = []
        for frame in range(n_frames):
            entries = [
                ObservationEntry(
                    camera_id=cam.id,
                    visible=bool(visible[index, frame]),
                    pixel=Pixel2D.from_array(pixels[index, frame]) if visible[index, frame] else None,
                )
                for index, cam in enumerate(cams)
            ]
            frames.append(
                FrameObservations(
                    frame_index=frame,
                    target_id=traj.target_id,
                    representative=representative,
                    entries=entries,
                ),
            )
        logger.debug("Rendered %d frames of target %s", n_frames, traj.target_id)
        return frames

    def simulate_scene(self, scene: SceneSpec) -> SimulatedScene:
        """
        Cameras, trajectories, anchors, calibration errors and observations of a scene, all drawn from its seed.
        :param scene: Scene spec
        :return: The simulated scene
        """
        streams = seed_streams(scene.rng_seed)
        cams = self.build_cameras(scene)
        trajectories = self.simulate_trajectories(scene, rng=streams[STREAM_TRAJECTORIES])
        anchors = [anchor for cam in cams for anchor in self.sample_anchors(scene, cam, rng=streams[STREAM_ANCHORS])]
        spec = scene.perturbation if scene.perturbation is not None else PerturbationSpec()
        perturbed = self.perturb_cameras(cams, spec, rng=streams[STREAM_PERTURBATION])
        observations = [
            obs
            for traj in trajectories
            for obs in self.render_observations(
                traj,
                cams,
                scene.noise,
                scene.representative,
                rng=streams[STREAM_OBSERVATIONS],
                max_visible=scene.max_visible,
            )
        ]
        logger.debug("Scene with seed %d successfully simulated", scene.rng_seed)
        return SimulatedScene(
            spec=scene,
            cameras=cams,
            perturbed_cameras=perturbed,
            anchors=anchors,
            trajectories=trajectories,
            observations=observations,
        )
