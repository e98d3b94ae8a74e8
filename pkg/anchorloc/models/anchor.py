"""
Definition of all anchor models.
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from anchorloc.models.camera import Pixel2D, Position3D

WEIGHT_SUM_TOL = 1e-10


class Anchor(BaseModel):
    """Models a surveyed point and its observed pixel in one camera."""

    model_config = ConfigDict(frozen=True)

    camera_id: str
    anchor_id: str
    world: Position3D
    observed_pixel: Pixel2D


class AnchorWeights(BaseModel):
    """Models the affine weights of one camera's anchors."""

    model_config = ConfigDict(frozen=True)

    camera_id: str
    weights: List[Tuple[str, float]]
    lambda_used: Annotated[float, Field(ge=0)]

    @model_validator(mode="after")
    def check_sum(self) -> AnchorWeights:
        if not self.weights:
            raise ValueError("weights must not be empty")
        total = sum(weight for _, weight in self.weights)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        return self

    @property
    def anchor_ids(self) -> List[str]:
        return [anchor_id for anchor_id, _ in self.weights]

    @property
    def values(self) -> np.ndarray:
        return np.array([weight for _, weight in self.weights], dtype=float)


class AnchorRecord(BaseModel):
    """Models one row of an anchor file."""

    camera_id: str
    anchor_id: str
    x: float
    y: float
    z: float
    u: float
    v: float

    def to_anchor(self) -> Anchor:
        return Anchor(
            camera_id=self.camera_id,
            anchor_id=self.anchor_id,
            world=Position3D(x=self.x, y=self.y, z=self.z),
            observed_pixel=Pixel2D(u=self.u, v=self.v),
        )

    @classmethod
    def from_anchor(cls, anchor: Anchor) -> AnchorRecord:
        return cls(
            camera_id=anchor.camera_id,
            anchor_id=anchor.anchor_id,
            x=anchor.world.x,
            y=anchor.world.y,
            z=anchor.world.z,
            u=anchor.observed_pixel.u,
            v=anchor.observed_pixel.v,
        )
