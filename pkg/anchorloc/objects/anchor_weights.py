"""
Affine anchor weights.

For anchors a_1..a_n of one camera and a point x, the weights minimise
||x - sum_j w_j a_j||^2 + lambda ||w||^2 subject to sum_j w_j = 1. Under the constraint the
fit term equals ||B^T w||^2 with the rows of B being a_j - x, so the weights solve

    [ B B^T + lambda I   1 ] [ w  ]   [ 0 ]
    [ 1^T                0 ] [ nu ] = [ 1 ]
"""
from __future__ import annotations

import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import scipy.linalg

from anchorloc.exception import (
    ConfigurationError,
    EmptyAnchorListError,
    MissingWeightsError,
    SingularSystemError,
    TooManyAnchorsError,
)
from anchorloc.models.anchor import Anchor, AnchorWeights
from anchorloc.models.camera import Position3D
from anchorloc.models.config import NumericsConfig, WeightsConfig
from anchorloc.objects.object import AnchorLocObject

logger = logging.getLogger("anchorloc")


def group_by_camera(anchors: Iterable[Anchor]) -> Dict[str, List[Anchor]]:
    """
    :param anchors: Anchors of any cameras
    :return: Anchors per camera id, each list sorted by anchor id
    """
    grouped: Dict[str, List[Anchor]] = defaultdict(list)
    for anchor in anchors:
        grouped[anchor.camera_id].append(anchor)
    return {camera_id: sorted(items, key=lambda item: item.anchor_id) for camera_id, items in sorted(grouped.items())}


def limit_anchors(anchors: Mapping[str, Sequence[Anchor]], limit: Optional[int]) -> Dict[str, List[Anchor]]:
    """Keep the first `limit` anchors of every camera by anchor id order."""
    kept = {}
    for camera_id, items in anchors.items():
        ordered = sorted(items, key=lambda item: item.anchor_id)
        kept[camera_id] = ordered if limit is None else ordered[:limit]
    return kept


class AnchorWeightSolver(AnchorLocObject):
    """Models the constrained ridge fit of anchor weights."""

    def __init__(self, numerics: Optional[NumericsConfig] = None, config: Optional[WeightsConfig] = None) -> None:
        super().__init__(numerics)
        self._config = config if config is not None else WeightsConfig()

    @property
    def config(self) -> WeightsConfig:
        return self._config

    def solve_weights(
        self,
        anchors: Sequence[Anchor],
        x_bar: Position3D,
        lambda_: Optional[float] = None,
    ) -> AnchorWeights:
        """
        Weights reproducing x_bar as an affine combination of anchor positions.
        :param anchors: Anchors of one camera
        :param x_bar: Point to reproduce
        :param lambda_: Ridge penalty, defaults to the configured value
        :return: Weights in the order of the anchors
        """
        penalty = self._config.lambda_ if lambda_ is None else float(lambda_)
        if penalty < 0:
            logger.error("Negative weight penalty %s", penalty)
            raise ConfigurationError(f"lambda must be non negative, got {penalty}")
        if not anchors:
            logger.error("Weights requested without anchors")
            raise EmptyAnchorListError("Cannot solve weights without anchors")
        if len(anchors) > self._config.max_anchors:
            logger.error("%d anchors exceed the limit of %d", len(anchors), self._config.max_anchors)
            raise TooManyAnchorsError(f"{len(anchors)} anchors exceed the limit of {self._config.max_anchors}")
        camera_id = anchors[0].camera_id

        offsets = np.array([anchor.world.as_array() for anchor in anchors]) - x_bar.as_array()
        n_anchors = offsets.shape[0]
        kkt = np.zeros((n_anchors + 1, n_anchors + 1))
        kkt[:n_anchors, :n_anchors] = offsets @ offsets.T + penalty * np.eye(n_anchors)
        kkt[:n_anchors, n_anchors] = 1.0
        kkt[n_anchors, :n_anchors] = 1.0
        rhs = np.zeros(n_anchors + 1)
        rhs[n_anchors] = 1.0

        if np.linalg.cond(kkt) <= self._numerics.cond_max:
            solution = scipy.linalg.solve(kkt, rhs, assume_a="sym")
        elif penalty == 0 and self._config.min_norm_fallback:
            # the multiplier is unique, so the minimum norm solution has the minimum norm weights
            solution = scipy.linalg.lstsq(kkt, rhs)[0]
            logger.debug("Camera %s weights use the minimum norm solution", camera_id)
        else:
            logger.error("Weight system of camera %s is singular", camera_id)
            raise SingularSystemError(f"Weight system of camera {camera_id} is singular at lambda={penalty}")

        weights = solution[:n_anchors]
        weights = weights / weights.sum()
        logger.debug("Weights of camera %s solved for %d anchors", camera_id, n_anchors)
        return AnchorWeights(
            camera_id=camera_id,
            weights=[(anchor.anchor_id, float(weight)) for anchor, weight in zip(anchors, weights)],
            lambda_used=penalty,
        )

    def solve_all(
        self,
        anchors: Mapping[str, Sequence[Anchor]],
        x_bar: Position3D,
        camera_ids: Iterable[str],
        lambda_: Optional[float] = None,
    ) -> Dict[str, AnchorWeights]:
        """
        Weights of several cameras at the same point.
        :param anchors: Anchors per camera id
        :param x_bar: Point to reproduce
        :param camera_ids: Cameras that need weights
        :param lambda_: Ridge penalty, defaults to the configured value
        :return: Weights per camera id
        """
        weights = {}
        for camera_id in camera_ids:
            if camera_id not in anchors:
                logger.error("Camera %s has no anchors", camera_id)
                raise MissingWeightsError(f"Camera {camera_id} has no anchors to compute weights from")
            weights[camera_id] = self.solve_weights(anchors[camera_id], x_bar, lambda_)
        return weights
