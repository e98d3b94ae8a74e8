"""
Import all object definitions here.
"""
from __future__ import annotations

import contextlib
from importlib.metadata import PackageNotFoundError, version

from anchorloc.objects.anchor_weights import AnchorWeightSolver
from anchorloc.objects.anchorloc import AnchorLoc
from anchorloc.objects.camera_model import CameraModel
from anchorloc.objects.dataset import DatasetStore
from anchorloc.objects.evaluation import Evaluator
from anchorloc.objects.initializer import Initializer
from anchorloc.objects.localizer import Localizer
from anchorloc.objects.simulator import Simulator

__all__ = [
    "AnchorLoc",
    "AnchorWeightSolver",
    "CameraModel",
    "DatasetStore",
    "Evaluator",
    "Initializer",
    "Localizer",
    "Simulator",
]

with contextlib.suppress(PackageNotFoundError):
    __version__ = version("anchorloc")
