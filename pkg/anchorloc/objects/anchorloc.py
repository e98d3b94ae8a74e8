from __future__ import annotations

from typing import Optional

from anchorloc.models.config import NumericsConfig, RunConfig, WeightsConfig
from anchorloc.models.localization import SolverConfig
from anchorloc.objects.anchor_weights import AnchorWeightSolver
from anchorloc.objects.camera_model import CameraModel
from anchorloc.objects.dataset import DatasetStore
from anchorloc.objects.evaluation import Evaluator
from anchorloc.objects.initializer import Initializer
from anchorloc.objects.localizer import Localizer
from anchorloc.objects.simulator import Simulator


class AnchorLoc:
    """Models the localization toolkit."""

    def __init__(
        self,
        numerics: Optional[NumericsConfig] = None,
        weights: Optional[WeightsConfig] = None,
        solver: Optional[SolverConfig] = None,
    ):
        self.numerics = numerics if numerics is not None else NumericsConfig()
        self.camera_model = CameraModel(self.numerics)
        self.initializer = Initializer(self.numerics, self.camera_model)
        self.weights = AnchorWeightSolver(self.numerics, weights)
        self.localizer = Localizer(self.numerics, self.camera_model, self.weights, solver)
        self.simulator = Simulator(self.numerics, self.camera_model)
        self.dataset = DatasetStore(self.numerics)
        self.evaluator = Evaluator(
            self.numerics,
            self.camera_model,
            self.simulator,
            self.initializer,
            self.localizer,
            self.dataset,
        )

    @classmethod
    def from_run_config(cls, config: RunConfig) -> AnchorLoc:
        return cls(config.numerics, config.weights, config.solver)
