"""
Definition of all observation models.
"""
from __future__ import annotations

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from anchorloc.models.camera import Pixel2D, Position3D


class RepresentativeEnum(str, Enum):
    """Enumerates the point of a pedestrian a pixel stands for."""

    head = "HEAD"
    ankle = "ANKLE"


class ObservationEntry(BaseModel):
    """Models one camera's view of the target in a frame."""

    model_config = ConfigDict(frozen=True)

    camera_id: str
    visible: bool
    pixel: Optional[Pixel2D] = None

    @model_validator(mode="before")
    @classmethod
    def drop_hidden_pixel(cls, data):
        if isinstance(data, dict) and not data.get("visible", False):
            data = {**data, "pixel": None}
        return data

    @model_validator(mode="after")
    def check_pixel(self) -> ObservationEntry:
        if self.visible and self.pixel is None:
            raise ValueError(f"visible entry for camera {self.camera_id} has no pixel")
        return self


class FrameObservations(BaseModel):
    """Models all camera observations of one target in one frame."""

    model_config = ConfigDict(frozen=True)

    frame_index: Annotated[int, Field(ge=0)]
    target_id: str
    representative: RepresentativeEnum = RepresentativeEnum.head
    entries: List[ObservationEntry] = []

    @model_validator(mode="after")
    def check_unique_cameras(self) -> FrameObservations:
        camera_ids = [entry.camera_id for entry in self.entries]
        if len(camera_ids) != len(set(camera_ids)):
            raise ValueError(f"frame {self.frame_index} has several entries for one camera")
        return self

    def visible_entries(self) -> List[ObservationEntry]:
        return [entry for entry in self.entries if entry.visible]

    @property
    def n_visible(self) -> int:
        return len(self.visible_entries())


class InitialEstimate(BaseModel):
    """Models the homography initial estimate x_bar."""

    model_config = ConfigDict(frozen=True)

    position: Position3D
    cameras_used: Annotated[List[str], Field(min_length=1)]
    per_camera_ground_points: List[Tuple[str, Position3D]]


class Detection(BaseModel):
    """Models a detection box of one target in one camera."""

    frame: Annotated[int, Field(ge=0)]
    target_id: str
    camera_id: str
    x1: float
    y1: float
    x2: float
    y2: float

    def representative_pixel(self, representative: RepresentativeEnum) -> Pixel2D:
        """
        Top-centre of the box stands for the head, bottom-centre for the ankle.
        :param representative: Which point to extract
        :return: The pixel
        """
        u = 0.5 * (self.x1 + self.x2)
        if representative == RepresentativeEnum.head:
            return Pixel2D(u=u, v=min(self.y1, self.y2))
        return Pixel2D(u=u, v=max(self.y1, self.y2))


class FrameInitial(BaseModel):
    """Models the initial estimate of one target in one frame, as stored in initials files."""

    model_config = ConfigDict(frozen=True)

    frame_index: Annotated[int, Field(ge=0)]
    target_id: str
    position: Position3D
    n_cameras: Annotated[int, Field(ge=1)]

    @property
    def key(self) -> Tuple[int, str]:
        return self.frame_index, self.target_id
