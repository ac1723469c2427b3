"""Python bindings for the gopo dialogue policy lab."""

from __future__ import annotations

import json
import os
from typing import Any, Mapping, Optional, Union

from . import _gopo
from ._gopo import (
    ConfigError,
    InputError,
    NumericError,
    StateError,
    bleu,
    esndcg,
    relevance,
)

ConfigLike = Union[None, str, os.PathLike, Mapping[str, Any]]

__all__ = [
    "ConfigError",
    "InputError",
    "NumericError",
    "StateError",
    "ablate",
    "bleu",
    "csa_reward",
    "default_config",
    "esndcg",
    "evaluate",
    "joint_weights",
    "relevance",
    "train",
    "tse",
]


def default_config() -> dict:
    return json.loads(_gopo.default_config_json())


def _config_text(config: ConfigLike) -> Optional[str]:
    if config is None:
        return None
    if isinstance(config, Mapping):
        return json.dumps(config)
    if isinstance(config, os.PathLike) or (isinstance(config, str) and not config.lstrip().startswith("{")):
        with open(config, encoding="utf-8") as fh:
            return fh.read()
    return config


def _required(config: ConfigLike) -> str:
    text = _config_text(config)
    return _gopo.default_config_json() if text is None else text


def csa_reward(dim_scores, config: ConfigLike = None) -> float:
    return _gopo.csa_reward(list(dim_scores), _config_text(config))


def joint_weights(turn: int, horizon: int, config: ConfigLike = None) -> tuple[float, float]:
    return _gopo.joint_weights(turn, horizon, _config_text(config))


def tse(turns, config: ConfigLike = None) -> float:
    """TSE from the completion turn of each milestone, None for a missed one."""
    return _gopo.tse(list(turns), _config_text(config))


def train(config: ConfigLike, run_dir: Union[str, os.PathLike], workers: int = 1) -> list[dict]:
    return _gopo.train(_required(config), os.fspath(run_dir), workers)


def ablate(config: ConfigLike, out_dir: Union[str, os.PathLike], workers: int = 1) -> list[dict]:
    return _gopo.ablate(_required(config), os.fspath(out_dir), workers)


def evaluate(
    config: ConfigLike,
    checkpoint_dir: Union[str, os.PathLike],
    episodes: int,
    seed: Optional[int] = None,
    workers: int = 1,
) -> dict:
    return _gopo.evaluate(_required(config), os.fspath(checkpoint_dir), episodes, seed, workers)
