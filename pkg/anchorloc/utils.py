"""
Definition of all utils.
"""
from __future__ import annotations

import logging
import os
from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel
from pydantic_core import to_jsonable_python

LOG_ENV_VAR = "ANCHORLOC_LOG"
CSV_FLOAT_FORMAT = "%.9g"

# Order of the independent random streams derived from one scene seed.
STREAM_TRAJECTORIES = 0
STREAM_ANCHORS = 1
STREAM_PERTURBATION = 2
STREAM_OBSERVATIONS = 3
N_STREAMS = 4


def custom_encoder(obj: Any) -> Any:
    """
    Custom encoder function to be passed to the default argument of json.dumps()
    :param obj: A pydantic object or a numpy value
    :return: An encoded object
    """
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json", by_alias=True)
    return to_jsonable_python(obj)


def seed_streams(seed: int, n_streams: int = N_STREAMS) -> List[np.random.Generator]:
    """
    Derive independent generators from a single seed.
    :param seed: Root seed
    :param n_streams: Number of generators
    :return: One generator per stream, always in the same order
    """
    children = np.random.SeedSequence(seed).spawn(n_streams)
    return [np.random.default_rng(child) for child in children]


def configure_logging(verbosity: int = 0, env_level: Optional[str] = None) -> int:
    """
    Configure the root handler for command line use.
    :param verbosity: Number of -v flags given
    :param env_level: Level name, defaults to the ANCHORLOC_LOG environment variable
    :return: The effective level
    """
    name = (env_level if env_level is not None else os.environ.get(LOG_ENV_VAR, "WARNING")).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    level = max(logging.DEBUG, level - 10 * verbosity)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger("anchorloc").setLevel(level)
    return level
