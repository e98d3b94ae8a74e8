"""
Definition of all exceptions.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class AnchorLocError(Exception):
    """Generic anchorloc exception."""


class PointBehindCameraError(AnchorLocError):
    """The point has no positive depth in the camera frame."""


class NoConvergenceError(AnchorLocError):
    """An iterative numeric routine did not reach its tolerance."""


class DegenerateHomographyError(AnchorLocError):
    """The camera is (nearly) parallel to the requested plane."""


class NoVisibleCameraError(AnchorLocError):
    """No camera sees the target in this frame."""


class SingularSystemError(AnchorLocError):
    """A linear system of the weight fit or of the solver is singular."""


class EmptyAnchorListError(AnchorLocError):
    """A camera has no anchors."""


class TooManyAnchorsError(AnchorLocError):
    """A camera has more anchors than the dense weight solver accepts."""


class MissingWeightsError(AnchorLocError):
    """Anchor weights are missing for a visible camera."""


class FovSamplingExhaustedError(AnchorLocError):
    """Rejection sampling could not find enough points in the camera's field of view."""


class LengthMismatchError(AnchorLocError):
    """Sequences that must be index-aligned have different lengths."""


class NoValidProbesError(AnchorLocError):
    """No probe pixel could be back-projected by both cameras."""


class ConfigurationError(AnchorLocError):
    """A configuration value or solver precondition is invalid."""


class SchemaError(AnchorLocError):
    """An input file does not follow its schema."""

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None, line: Optional[int] = None) -> None:
        self.path = str(path) if path is not None else None
        self.line = line
        location = ""
        if self.path is not None:
            location = f"{self.path}:{line}: " if line is not None else f"{self.path}: "
        super().__init__(f"{location}{message}")
