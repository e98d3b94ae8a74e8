"""
Definition of all evaluation models.
"""
from __future__ import annotations

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated

from anchorloc.models.config import WeightsConfig
from anchorloc.models.localization import SolverConfig
from anchorloc.models.simulation import PerturbationSpec, SceneSpec, SignModeEnum


class MetricsReport(BaseModel):
    """Models distance metrics of estimates against ground truth (meters)."""

    average_distance: Annotated[float, Field(ge=0)]
    distance_std: Annotated[float, Field(ge=0)]
    improvement_ratio: Annotated[float, Field(ge=0, le=1)]
    n_frames: Annotated[int, Field(ge=0)]
    breakdown: Dict[str, MetricsReport] = {}


class MethodEnum(str, Enum):
    """Enumerates the localization methods compared by a sweep."""

    nominal = "NOMINAL"
    anchor = "ANCHOR"
    ground_truth = "GROUND_TRUTH"


class MethodSpec(BaseModel):
    """Models one method column of a sweep."""

    model_config = ConfigDict(frozen=True)

    name: str
    method: MethodEnum
    anchor_count: Optional[Annotated[int, Field(ge=1)]] = None

    @model_validator(mode="after")
    def check_anchor_count(self) -> MethodSpec:
        if self.method == MethodEnum.anchor and self.anchor_count is None:
            raise ValueError(f"anchor method {self.name} needs anchor_count")
        return self


class SweepSpec(BaseModel):
    """Models an experiment grid."""

    model_config = ConfigDict(frozen=True)

    experiment: Annotated[str, Field(pattern=r"^[A-Za-z0-9_\-]+$")]
    scene: SceneSpec
    perturbations: Annotated[List[PerturbationSpec], Field(min_length=1)] = [PerturbationSpec()]
    pixel_sigmas: Optional[List[Annotated[float, Field(ge=0)]]] = None
    methods: Annotated[List[MethodSpec], Field(min_length=1)]
    seeds: Annotated[List[int], Field(min_length=1)] = [0]
    batch_sizes: Annotated[List[Annotated[int, Field(ge=1)]], Field(min_length=1)] = [1]
    rhos: Annotated[List[Annotated[float, Field(ge=0)]], Field(min_length=1)] = [60.0]
    average_signs: bool = True
    anchor_targets: bool = False
    weights: WeightsConfig = WeightsConfig()
    solver: SolverConfig = SolverConfig()

    @model_validator(mode="after")
    def check_methods(self) -> SweepSpec:
        names = [method.name for method in self.methods]
        if len(names) != len(set(names)):
            raise ValueError("method names must be unique")
        largest = max((method.anchor_count or 0 for method in self.methods), default=0)
        if largest > self.scene.anchors_per_camera:
            raise ValueError("a method uses more anchors than the scene samples per camera")
        return self


class SweepCell(BaseModel):
    """Models one point of an experiment grid."""

    model_config = ConfigDict(frozen=True)

    experiment: str
    perturbation: PerturbationSpec
    pixel_sigma: float
    method: MethodSpec
    seed: int
    batch_size: int
    rho: float

    @property
    def scenario_key(self) -> str:
        """Cells with the same scenario share one simulated scene."""
        return f"{self.perturbation.label}__px{self.pixel_sigma:g}__seed{self.seed}"

    @property
    def key(self) -> str:
        return f"{self.scenario_key}__{self.method.name}__T{self.batch_size}_rho{self.rho:g}"

    @property
    def group_key(self) -> str:
        """Key of the summary row: seeds and forced signs are averaged away."""
        spec = self.perturbation.with_sign(SignModeEnum.both)
        return f"{spec.label}__px{self.pixel_sigma:g}__{self.method.name}__T{self.batch_size}_rho{self.rho:g}"
