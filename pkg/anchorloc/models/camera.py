"""
Definition of all camera models.
"""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing_extensions import Annotated

PositiveFloat = Annotated[float, Field(gt=0)]
PositiveInt = Annotated[int, Field(gt=0)]

# Column order of the perturbable parameter vector h, shared by every module.
PARAMETER_NAMES: Tuple[str, ...] = (
    "pitch",
    "yaw",
    "roll",
    "Tx",
    "Ty",
    "Tz",
    "k1",
    "k2",
    "p1",
    "p2",
    "k3",
    "fx",
    "fy",
    "cx",
    "cy",
)
N_PARAMETERS = len(PARAMETER_NAMES)
ORTHONORMAL_TOL = 1e-10


class Position3D(BaseModel):
    """Models a world point in meters."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> Position3D:
        return cls(x=float(values[0]), y=float(values[1]), z=float(values[2]))


class Pixel2D(BaseModel):
    """Models a pixel coordinate. It may lie outside the image."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> Pixel2D:
        return cls(u=float(values[0]), v=float(values[1]))


class Intrinsics(BaseModel):
    """Models focal length and principal point, in pixels."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    fx: PositiveFloat
    fy: PositiveFloat
    cx: float
    cy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=float)


class Distortion(BaseModel):
    """Models radial (k1, k2, k3) and tangential (p1, p2) coefficients."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0

    def as_array(self) -> np.ndarray:
        """Coefficients in file order [k1, k2, p1, p2, k3]."""
        return np.array([self.k1, self.k2, self.p1, self.p2, self.k3], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> Distortion:
        k1, k2, p1, p2, k3 = (float(value) for value in values)
        return cls(k1=k1, k2=k2, p1=p1, p2=p2, k3=k3)


class Extrinsics(BaseModel):
    """Models the world to camera transform: c = R x + T."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    rotation: Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]]
    translation: Tuple[float, float, float]

    @field_validator("rotation")
    @classmethod
    def check_rotation(cls, rotation):
        matrix = np.array(rotation, dtype=float)
        if np.max(np.abs(matrix.T @ matrix - np.eye(3))) >= ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(matrix) - 1.0) >= ORTHONORMAL_TOL:
            raise ValueError("rotation determinant is not +1")
        return rotation

    @classmethod
    def from_arrays(cls, rotation: np.ndarray, translation: np.ndarray) -> Extrinsics:
        rows = np.asarray(rotation, dtype=float).reshape(3, 3)
        return cls(
            rotation=tuple(tuple(float(value) for value in row) for row in rows),  # type: ignore[arg-type]
            translation=tuple(float(value) for value in np.asarray(translation).reshape(3)),  # type: ignore[arg-type]
        )


class CameraParams(BaseModel):
    """Models one calibrated camera h_k."""

    model_config = ConfigDict(frozen=True)

    id: str
    intrinsics: Intrinsics
    extrinsics: Extrinsics
    distortion: Distortion = Distortion()
    image_size: Tuple[PositiveInt, PositiveInt]

    @property
    def rotation_matrix(self) -> np.ndarray:
        return np.array(self.extrinsics.rotation, dtype=float)

    @property
    def translation_vector(self) -> np.ndarray:
        return np.array(self.extrinsics.translation, dtype=float)

    @property
    def intrinsics_vector(self) -> np.ndarray:
        """[fx, fy, cx, cy]"""
        return self.intrinsics.as_array()

    @property
    def distortion_vector(self) -> np.ndarray:
        """[k1, k2, p1, p2, k3]"""
        return self.distortion.as_array()

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation_matrix.T @ self.translation_vector

    def replace(
        self,
        rotation: np.ndarray,
        translation: np.ndarray,
        distortion: np.ndarray,
        intrinsics: np.ndarray,
    ) -> CameraParams:
        """Copy of this camera with new parameter arrays."""
        fx, fy, cx, cy = (float(value) for value in intrinsics)
        return CameraParams(
            id=self.id,
            intrinsics=Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy),
            extrinsics=Extrinsics.from_arrays(rotation, translation),
            distortion=Distortion.from_array(distortion),
            image_size=self.image_size,
        )


class CameraRecord(BaseModel):
    """Models one entry of a camera file."""

    id: str
    image_size: Tuple[PositiveInt, PositiveInt]
    intrinsics: Intrinsics
    rotation: Annotated[List[float], Field(min_length=9, max_length=9)]
    translation: Annotated[List[float], Field(min_length=3, max_length=3)]
    distortion: Annotated[List[float], Field(min_length=5, max_length=5)] = [0.0] * 5

    def to_params(self) -> CameraParams:
        return CameraParams(
            id=self.id,
            intrinsics=self.intrinsics,
            extrinsics=Extrinsics.from_arrays(np.array(self.rotation).reshape(3, 3), np.array(self.translation)),
            distortion=Distortion.from_array(self.distortion),
            image_size=self.image_size,
        )

    @classmethod
    def from_params(cls, cam: CameraParams) -> CameraRecord:
        return cls(
            id=cam.id,
            image_size=cam.image_size,
            intrinsics=cam.intrinsics,
            rotation=[float(value) for value in cam.rotation_matrix.reshape(9)],
            translation=[float(value) for value in cam.translation_vector],
            distortion=[float(value) for value in cam.distortion_vector],
        )


class ProjectionJacobians(BaseModel):
    """Models the derivatives of a projected pixel."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d_pixel_d_x: np.ndarray
    d_pixel_d_h: np.ndarray

    @field_validator("d_pixel_d_x", "d_pixel_d_h")
    @classmethod
    def check_finite(cls, value: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(value)):
            raise ValueError("jacobian has non finite entries")
        return value
