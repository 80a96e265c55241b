"""Common multi-agent environment interface and episode-return accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

DEAD_ACTION = -1  # sentinel the harness must pass for dead agents


class InvalidActionError(ValueError):
    pass


class DeadAgentError(ValueError):
    pass


@dataclass
class StepResult:
    rewards: np.ndarray       # (n_agents,), zero for dead agents
    done: bool
    alive: np.ndarray         # (n_agents,) bool, post-step
    info: dict = field(default_factory=dict)


class EpisodeReturn(NamedTuple):
    discounted: float
    undiscounted: float


def episode_return(rewards, gamma: float) -> EpisodeReturn:
    """Discounted and undiscounted totals of a per-step team reward sequence."""
    rewards = np.asarray(rewards, dtype=float)
    disc = float(sum(gamma ** t * r for t, r in enumerate(rewards)))
    return EpisodeReturn(discounted=disc, undiscounted=float(rewards.sum()))


class MultiAgentEnv:
    """Base: fixed agent count, discrete actions, float observation vectors.

    Subclasses set n_agents / n_actions / obs_dim and implement _reset,
    _step and _observe. One instance is single-threaded; determinism comes
    from the seeded generator handed to the constructor.
    """

    n_agents: int
    n_actions: int
    obs_dim: int
    max_steps: int

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.t = 0
        self._alive = np.ones(0, dtype=bool)

    # -- interface -----------------------------------------------------

    def reset(self) -> np.ndarray:
        self.t = 0
        self._alive = np.ones(self.n_agents, dtype=bool)
        self._reset()
        return self.observe_all()

    def step(self, joint_action) -> StepResult:
        actions = np.asarray(joint_action, dtype=np.int64)
        if actions.shape != (self.n_agents,):
            raise InvalidActionError(
                f"joint action must have shape ({self.n_agents},), got {actions.shape}")
        for i, a in enumerate(actions):
            if not self._alive[i]:
                if a != DEAD_ACTION:
                    raise DeadAgentError(f"agent {i} is dead but got action {a}")
            elif not (0 <= a < self.n_actions):
                raise InvalidActionError(
                    f"agent {i}: action {a} outside [0, {self.n_actions})")
        result = self._step(actions)
        self.t += 1
        if self.t >= self.max_steps:
            result.done = True
        if not np.all(np.isfinite(result.rewards)):
            raise RuntimeError("environment produced non-finite rewards")
        return result

    def observe(self, agent_id: int) -> np.ndarray:
        if not (0 <= agent_id < self.n_agents):
            raise DeadAgentError(f"unknown agent id {agent_id}")
        if not self._alive[agent_id]:
            raise DeadAgentError(f"agent {agent_id} is dead")
        return self._observe(agent_id)

    def observe_all(self) -> np.ndarray:
        """(n_agents, obs_dim); dead agents emit zero vectors."""
        out = np.zeros((self.n_agents, self.obs_dim))
        for i in range(self.n_agents):
            if self._alive[i]:
                out[i] = self._observe(i)
        return out

    def alive_mask(self) -> np.ndarray:
        return self._alive.copy()

    def positions(self) -> np.ndarray:
        """(n_agents, 2) integer positions; (-1, -1) for dead agents."""
        raise NotImplementedError

    def teams(self) -> np.ndarray:
        """(n_agents,) team index; single-team envs are all zeros."""
        return np.zeros(self.n_agents, dtype=np.int64)

    # -- subclass hooks --------------------------------------------------

    def _reset(self):
        raise NotImplementedError

    def _step(self, actions) -> StepResult:
        raise NotImplementedError

    def _observe(self, agent_id: int) -> np.ndarray:
        raise NotImplementedError
