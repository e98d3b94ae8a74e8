"""
Definition of all simulation models.
"""
from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from anchorloc.models.anchor import Anchor
from anchorloc.models.camera import CameraParams, CameraRecord, Position3D
from anchorloc.models.observation import FrameObservations, RepresentativeEnum

NonNegativeFloat = Annotated[float, Field(ge=0)]
PositiveFloat = Annotated[float, Field(gt=0)]


class SignModeEnum(str, Enum):
    """Enumerates how perturbation signs are drawn."""

    both = "BOTH"
    positive = "POSITIVE"
    negative = "NEGATIVE"


class PerturbationSpec(BaseModel):
    """Models one row of camera parameter error levels."""

    model_config = ConfigDict(frozen=True)

    rx_deg: NonNegativeFloat = 0.0
    ry_deg: NonNegativeFloat = 0.0
    t_m: NonNegativeFloat = 0.0
    d_rel: NonNegativeFloat = 0.0
    sign_mode: SignModeEnum = SignModeEnum.both

    @property
    def is_zero(self) -> bool:
        return self.rx_deg == 0 and self.ry_deg == 0 and self.t_m == 0 and self.d_rel == 0

    def with_sign(self, sign_mode: SignModeEnum) -> PerturbationSpec:
        return self.model_copy(update={"sign_mode": sign_mode})

    @property
    def label(self) -> str:
        return f"rx{self.rx_deg:g}_ry{self.ry_deg:g}_t{self.t_m:g}_d{self.d_rel:g}_{self.sign_mode.value.lower()}"


class NoiseSpec(BaseModel):
    """Models pixel extraction noise of targets and anchors (Gaussian, pixels)."""

    model_config = ConfigDict(frozen=True)

    pixel_sigma: NonNegativeFloat = 3.0
    anchor_pixel_sigma: NonNegativeFloat = 0.0


class CameraLayout(BaseModel):
    """Models cameras spread along the scene perimeter, looking inwards and down."""

    model_config = ConfigDict(frozen=True)

    count: Annotated[int, Field(ge=1)]
    mount_height: PositiveFloat = 4.0
    look_ahead: PositiveFloat = 8.0
    image_size: Tuple[Annotated[int, Field(gt=0)], Annotated[int, Field(gt=0)]] = (1280, 720)
    focal_px: PositiveFloat = 800.0
    distortion: Annotated[List[float], Field(min_length=5, max_length=5)] = [-0.3, 0.1, 0.0, 0.0, 0.0]


class SceneSpec(BaseModel):
    """Models a synthetic scene and how it is observed."""

    model_config = ConfigDict(frozen=True)

    extent: Tuple[PositiveFloat, PositiveFloat] = (20.0, 16.0)
    cameras: List[CameraRecord] = []
    layout: Optional[CameraLayout] = None
    anchors_per_camera: Annotated[int, Field(ge=1, le=32)] = 10
    rng_seed: int = 0
    n_targets: Annotated[int, Field(ge=1)] = 3
    n_frames: Annotated[int, Field(ge=1)] = 200
    step_sigma: NonNegativeFloat = 0.1
    height_min: PositiveFloat = 1.5
    height_max: PositiveFloat = 1.9
    anchor_height_max: NonNegativeFloat = 2.5
    max_rejects: Annotated[int, Field(ge=1)] = 100_000
    representative: RepresentativeEnum = RepresentativeEnum.head
    noise: NoiseSpec = NoiseSpec()
    perturbation: Optional[PerturbationSpec] = None
    max_visible: Optional[Annotated[int, Field(ge=1)]] = None

    @model_validator(mode="after")
    def check_scene(self) -> SceneSpec:
        if not self.cameras and self.layout is None:
            raise ValueError("a scene needs explicit cameras or a camera layout")
        if self.height_min > self.height_max:
            raise ValueError("height_min exceeds height_max")
        return self


class GroundTruthTrajectory(BaseModel):
    """Models the ground positions of one target and its constant height."""

    model_config = ConfigDict(frozen=True)

    target_id: str
    height: PositiveFloat
    positions: List[Position3D]

    def representative_positions(self, representative: RepresentativeEnum) -> List[Position3D]:
        """
        :param representative: HEAD lifts every ground position by the target height
        :return: The positions the observations are rendered from
        """
        if representative == RepresentativeEnum.ankle:
            return list(self.positions)
        return [Position3D(x=position.x, y=position.y, z=position.z + self.height) for position in self.positions]


class SimulatedScene(BaseModel):
    """Models everything generated for one scene and seed."""

    model_config = ConfigDict(frozen=True)

    spec: SceneSpec
    cameras: List[CameraParams]
    perturbed_cameras: List[CameraParams]
    anchors: List[Anchor]
    trajectories: List[GroundTruthTrajectory]
    observations: List[FrameObservations]

    @property
    def target_heights(self) -> Dict[str, float]:
        return {trajectory.target_id: trajectory.height for trajectory in self.trajectories}
