"""
Definition of all configuration models.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from anchorloc.models.localization import LocalizationModeEnum, SmoothingConfig, SolverConfig
from anchorloc.models.observation import RepresentativeEnum
from anchorloc.models.simulation import PerturbationSpec


class NumericsConfig(BaseModel):
    """Models the numeric tolerances of the camera model."""

    model_config = ConfigDict(frozen=True)

    depth_epsilon: Annotated[float, Field(gt=0)] = 1e-6
    undistort_tol: Annotated[float, Field(gt=0)] = 1e-10
    max_undistort_iters: Annotated[int, Field(ge=1)] = 50
    cond_max: Annotated[float, Field(gt=1)] = 1e12
    margin_px: Annotated[float, Field(ge=0)] = 0.0


class WeightsConfig(BaseModel):
    """Models the anchor weight penalty."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lambda_: Annotated[float, Field(ge=0, alias="lambda")] = 1e-2
    max_anchors: Annotated[int, Field(ge=1)] = 32
    min_norm_fallback: bool = True


class RunConfig(BaseModel):
    """Models one localization run over files."""

    model_config = ConfigDict(frozen=True)

    mode: LocalizationModeEnum = LocalizationModeEnum.anchor
    anchor_count_limit: Optional[Annotated[int, Field(ge=1)]] = None
    weights: WeightsConfig = WeightsConfig()
    smoothing: SmoothingConfig = SmoothingConfig()
    solver: SolverConfig = SolverConfig()
    numerics: NumericsConfig = NumericsConfig()
    representative: RepresentativeEnum = RepresentativeEnum.head
    head_height: Optional[Annotated[float, Field(gt=0)]] = None
    target_heights: Dict[str, Annotated[float, Field(gt=0)]] = {}
    perturbation: Optional[PerturbationSpec] = None
    seed: int = 0
    cameras: Path
    anchors: Optional[Path] = None
    targets: Optional[Path] = None
    observations: Optional[Path] = None
    detections: Optional[Path] = None
    out: Path

    @model_validator(mode="after")
    def check_inputs(self) -> RunConfig:
        if (self.observations is None) == (self.detections is None):
            raise ValueError("exactly one of observations or detections must be given")
        if self.mode == LocalizationModeEnum.anchor and self.anchors is None:
            raise ValueError("anchor mode needs an anchors file")
        return self

    def resolve(self, base_dir: Path) -> RunConfig:
        """
        Resolve relative paths against the directory of the config file.
        :param base_dir: Directory of the config file
        :return: A copy with absolute paths
        """
        update = {}
        for name in ("cameras", "anchors", "targets", "observations", "detections", "out"):
            value = getattr(self, name)
            if value is not None and not value.is_absolute():
                update[name] = base_dir / value
        return self.model_copy(update=update)
