"""Grid environments behind one common interface."""

from __future__ import annotations

import numpy as np

from .base import (
    DEAD_ACTION,
    DeadAgentError,
    EpisodeReturn,
    InvalidActionError,
    MultiAgentEnv,
    StepResult,
    episode_return,
)
from .battle import BattleConfig, BattleEnv
from .firefighter import FirefighterConfig, FirefighterEnv
from .pursuit import PursuitConfig, PursuitEnv

_REGISTRY = {
    "firefighter": (FirefighterEnv, FirefighterConfig),
    "pursuit": (PursuitEnv, PursuitConfig),
    "battle": (BattleEnv, BattleConfig),
}


def make_env(name: str, rng: np.random.Generator | None = None, **overrides) -> MultiAgentEnv:
    if name not in _REGISTRY:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(_REGISTRY)}")
    env_cls, cfg_cls = _REGISTRY[name]
    return env_cls(cfg_cls(**overrides), rng=rng)


__all__ = [
    "DEAD_ACTION",
    "DeadAgentError",
    "EpisodeReturn",
    "InvalidActionError",
    "MultiAgentEnv",
    "StepResult",
    "episode_return",
    "make_env",
    "BattleConfig",
    "BattleEnv",
    "FirefighterConfig",
    "FirefighterEnv",
    "PursuitConfig",
    "PursuitEnv",
]
