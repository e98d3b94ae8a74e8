"""
Definition of all localization models.
"""
from __future__ import annotations

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from anchorloc.models.camera import Position3D
from anchorloc.models.observation import FrameInitial


class LocalizationModeEnum(str, Enum):
    """Enumerates the residual a frame is solved with."""

    nominal = "NOMINAL"
    anchor = "ANCHOR"


class SolverConfig(BaseModel):
    """Models the damped Gauss-Newton settings."""

    model_config = ConfigDict(frozen=True)

    max_iters: Annotated[int, Field(ge=1)] = 50
    step_tol: Annotated[float, Field(gt=0)] = 1e-6
    grad_tol: Annotated[float, Field(gt=0)] = 1e-8
    damping_init: Annotated[float, Field(gt=0)] = 1e-3
    damping_up: Annotated[float, Field(gt=1)] = 10.0
    damping_down: Annotated[float, Field(gt=0, lt=1)] = 0.5
    damping_max: Annotated[float, Field(gt=0)] = 1e16
    fixed_height: Optional[float] = None


class SmoothingConfig(BaseModel):
    """Models the batch window and smoothness weight (pixels^2 / m^2)."""

    model_config = ConfigDict(frozen=True)

    batch_size: Annotated[int, Field(ge=1)] = 1
    rho: Annotated[float, Field(ge=0)] = 60.0

    @property
    def is_per_frame(self) -> bool:
        return self.batch_size == 1 or self.rho == 0


class CameraResidual(BaseModel):
    """Models the final residual of one visible camera, in pixels."""

    model_config = ConfigDict(frozen=True)

    camera_id: str
    residual: Tuple[float, float]


class LocalizationResult(BaseModel):
    """Models the solution of one frame."""

    model_config = ConfigDict(frozen=True)

    frame_index: int = 0
    target_id: str = ""
    position: Position3D
    converged: bool
    iterations: Annotated[int, Field(ge=0)]
    final_objective: Annotated[float, Field(ge=0)]
    per_camera_residuals: List[CameraResidual]
    mode: LocalizationModeEnum

    @model_validator(mode="after")
    def check_residuals(self) -> LocalizationResult:
        if not self.per_camera_residuals:
            raise ValueError("a result needs at least one visible camera")
        return self

    @property
    def n_cameras(self) -> int:
        return len(self.per_camera_residuals)


class FrameFailure(BaseModel):
    """Models a frame that could not be localized."""

    model_config = ConfigDict(frozen=True)

    frame_index: int
    target_id: str
    stage: str
    error: str
    message: str


class LocalizationRun(BaseModel):
    """Models the localization of a whole observation set."""

    model_config = ConfigDict(frozen=True)

    results: List[LocalizationResult] = []
    initials: List[FrameInitial] = []
    failures: List[FrameFailure] = []

    @model_validator(mode="after")
    def check_alignment(self) -> LocalizationRun:
        if len(self.results) != len(self.initials):
            raise ValueError("results and initials must be index aligned")
        return self

    @property
    def n_converged(self) -> int:
        return sum(result.converged for result in self.results)
