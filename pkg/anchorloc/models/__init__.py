"""
Import all models here.
"""
from __future__ import annotations

from .anchor import Anchor, AnchorRecord, AnchorWeights
from .camera import (
    N_PARAMETERS,
    PARAMETER_NAMES,
    CameraParams,
    CameraRecord,
    Distortion,
    Extrinsics,
    Intrinsics,
    Pixel2D,
    Position3D,
    ProjectionJacobians,
)
from .config import NumericsConfig, RunConfig, WeightsConfig
from .evaluation import MethodEnum, MethodSpec, MetricsReport, SweepCell, SweepSpec
from .localization import (
    CameraResidual,
    FrameFailure,
    LocalizationModeEnum,
    LocalizationResult,
    LocalizationRun,
    SmoothingConfig,
    SolverConfig,
)
from .observation import (
    Detection,
    FrameInitial,
    FrameObservations,
    InitialEstimate,
    ObservationEntry,
    RepresentativeEnum,
)
from .simulation import (
    CameraLayout,
    GroundTruthTrajectory,
    NoiseSpec,
    PerturbationSpec,
    SceneSpec,
    SignModeEnum,
    SimulatedScene,
)

__all__ = [
    "Anchor",
    "AnchorRecord",
    "AnchorWeights",
    "N_PARAMETERS",
    "PARAMETER_NAMES",
    "CameraParams",
    "CameraRecord",
    "Distortion",
    "Extrinsics",
    "Intrinsics",
    "Pixel2D",
    "Position3D",
    "ProjectionJacobians",
    "NumericsConfig",
    "RunConfig",
    "WeightsConfig",
    "MethodEnum",
    "MethodSpec",
    "MetricsReport",
    "SweepCell",
    "SweepSpec",
    "CameraResidual",
    "FrameFailure",
    "LocalizationRun",
    "LocalizationModeEnum",
    "LocalizationResult",
    "SmoothingConfig",
    "SolverConfig",
    "Detection",
    "FrameInitial",
    "FrameObservations",
    "InitialEstimate",
    "ObservationEntry",
    "RepresentativeEnum",
    "CameraLayout",
    "GroundTruthTrajectory",
    "NoiseSpec",
    "PerturbationSpec",
    "SceneSpec",
    "SignModeEnum",
    "SimulatedScene",
]
