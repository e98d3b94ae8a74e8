from __future__ import annotations

import logging
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from anchorloc.exception import (
    AnchorLocError,
    ConfigurationError,
    DegenerateHomographyError,
    NoConvergenceError,
    NoVisibleCameraError,
    PointBehindCameraError,
)
from anchorloc.models.camera import CameraParams, Position3D
from anchorloc.models.config import NumericsConfig
from anchorloc.models.localization import FrameFailure
from anchorloc.models.observation import FrameInitial, FrameObservations, InitialEstimate, RepresentativeEnum
from anchorloc.objects.camera_model import CameraModel
from anchorloc.objects.object import AnchorLocObject

logger = logging.getLogger("anchorloc")


class Initializer(AnchorLocObject):
    """Models the homography initial estimate."""

    def __init__(self, numerics: Optional[NumericsConfig] = None, camera_model: Optional[CameraModel] = None) -> None:
        super().__init__(numerics)
        self._camera_model = camera_model if camera_model is not None else CameraModel(self._numerics)

    @staticmethod
    def plane_height_for(representative: RepresentativeEnum, target_height: Optional[float] = None) -> float:
        """
        Height of the reference plane for a representative point.
        :param representative: HEAD or ANKLE
        :param target_height: Nominal height of the target, needed for HEAD
        :return: Plane height in meters
        """
        if representative == RepresentativeEnum.ankle:
            return 0.0
        if target_height is None:
            logger.error("Head pixels need a target height")
            raise ConfigurationError("HEAD representative points need a target height (head_height or target_heights)")
        return float(target_height)

    def initial_estimate(
        self,
        obs: FrameObservations,
        cams: Sequence[CameraParams],
        plane_height: float,
    ) -> InitialEstimate:
        """
        Average of the visible pixels mapped onto the plane z = plane_height.
        :param obs: Observations of one target in one frame
        :param cams: Calibrated cameras
        :param plane_height: Height of the reference plane in meters
        :return: Initial estimate
        """
        cams_by_id = {cam.id: cam for cam in cams}
        ground_points: List[Tuple[str, Position3D]] = []
        for entry in sorted(obs.visible_entries(), key=lambda item: item.camera_id):
            cam = cams_by_id.get(entry.camera_id)
            if cam is None:
                logger.warning("Camera %s is not calibrated, skipped", entry.camera_id)
                continue
            try:
                ground = self._camera_model.pixel_to_plane(entry.pixel, cam, plane_height)  # type: ignore[arg-type]
            except (DegenerateHomographyError, NoConvergenceError, PointBehindCameraError) as error:
                logger.warning("Camera %s skipped for frame %s: %s", cam.id, obs.frame_index, error)
                continue
            ground_points.append((cam.id, ground))

        if not ground_points:
            logger.error("No usable camera for target %s in frame %s", obs.target_id, obs.frame_index)
            raise NoVisibleCameraError(f"No usable camera for target {obs.target_id} in frame {obs.frame_index}")

        mean = np.mean([point.as_array() for _, point in ground_points], axis=0)
        position = Position3D(x=float(mean[0]), y=float(mean[1]), z=float(plane_height))
        logger.debug("Frame %s initialised from %d cameras", obs.frame_index, len(ground_points))
        return InitialEstimate(
            position=position,
            cameras_used=[camera_id for camera_id, _ in ground_points],
            per_camera_ground_points=ground_points,
        )

    def initialize_all(
        self,
        observations: Sequence[FrameObservations],
        cams: Sequence[CameraParams],
        target_heights: Optional[Mapping[str, float]] = None,
        default_height: Optional[float] = None,
    ) -> Tuple[List[Tuple[FrameObservations, FrameInitial]], List[FrameFailure]]:
        """
        Initial estimates of a whole observation set.
        :param observations: Frames of any targets
        :param cams: Calibrated cameras
        :param target_heights: Nominal height per target id
        :param default_height: Height of targets missing from target_heights
        :return: Frames with their initial estimate sorted by target and frame, and the frames that failed
        """
        target_heights = target_heights if target_heights is not None else {}
        initialized = []
        failures = []
        for obs in sorted(observations, key=lambda item: (item.target_id, item.frame_index)):
            plane_height = self.plane_height_for(obs.representative, target_heights.get(obs.target_id, default_height))
            try:
                estimate = self.initial_estimate(obs, cams, plane_height)
            except AnchorLocError as error:
                failures.append(
                    FrameFailure(
                        frame_index=obs.frame_index,
                        target_id=obs.target_id,
                        stage="initialize",
                        error=type(error).__name__,
                        message=str(error),
                    ),
                )
                continue
            initialized.append(
                (
                    obs,
                    FrameInitial(
                        frame_index=obs.frame_index,
                        target_id=obs.target_id,
                        position=estimate.position,
                        n_cameras=obs.n_visible,
                    ),
                ),
            )
        logger.debug("Initialised %d frames, %d failed", len(initialized), len(failures))
        return initialized, failures
