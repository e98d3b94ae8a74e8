"""
Definition of anchorloc base object.
"""
from __future__ import annotations

from typing import Optional

from anchorloc.models.config import NumericsConfig


class AnchorLocObject:
    """Models a service sharing one set of numeric tolerances."""

    def __init__(self, numerics: Optional[NumericsConfig] = None) -> None:
        self._numerics = numerics if numerics is not None else NumericsConfig()

    @property
    def numerics(self) -> NumericsConfig:
        return self._numerics
