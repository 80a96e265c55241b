"""Adversarial pursuit: pursuers tag random-walking targets on a grid.

A tag attempt always costs 0.2; a successful tag (some target within
Chebyshev distance 1) pays +1 and respawns the target at a random free cell.
Targets are environment-controlled and drift uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import MultiAgentEnv, StepResult

MOVES = np.array([[0, 0], [-1, 0], [1, 0], [0, -1], [0, 1]])  # stay, N, S, W, E


@dataclass
class PursuitConfig:
    n_agents: int = 25          # pursuers
    n_targets: int = 50
    grid_size: int = 45
    max_steps: int = 60
    tag_reward: float = 1.0
    tag_penalty: float = 0.2
    obs_targets: int = 5        # nearest targets in the observation
    seed: int = 0

    def validate(self):
        if self.n_agents < 2:
            raise ValueError("need at least 2 pursuers")
        if self.n_targets < 1:
            raise ValueError("need at least 1 target")


class PursuitEnv(MultiAgentEnv):
    # actions: 0 stay, 1-4 move, 5 tag
    TAG = 5

    def __init__(self, config: PursuitConfig | None = None,
                 rng: np.random.Generator | None = None):
        cfg = config or PursuitConfig()
        cfg.validate()
        super().__init__(rng or np.random.default_rng(cfg.seed))
        self.cfg = cfg
        self.n_agents = cfg.n_agents
        self.n_actions = 6
        self.obs_dim = 2 + 2 * cfg.obs_targets
        self.max_steps = cfg.max_steps
        self.reset()

    def _random_cells(self, count):
        g = self.cfg.grid_size
        cells = self.rng.integers(0, g, size=(count, 2))
        return cells.astype(np.int64)

    def _reset(self):
        self.agent_pos = self._random_cells(self.cfg.n_agents)
        self.target_pos = self._random_cells(self.cfg.n_targets)
        self.tag_count = 0
        self.attempt_count = 0

    def _step(self, actions) -> StepResult:
        g = self.cfg.grid_size
        rewards = np.zeros(self.n_agents)
        # pursuer moves (cells may be shared)
        movers = actions < self.TAG
        self.agent_pos[movers] = np.clip(self.agent_pos[movers] + MOVES[actions[movers]], 0, g - 1)
        # tags, in agent order
        tagged_this_step = 0
        for i in np.flatnonzero(actions == self.TAG):
            rewards[i] -= self.cfg.tag_penalty
            self.attempt_count += 1
            cheb = np.abs(self.target_pos - self.agent_pos[i]).max(axis=1)
            in_range = np.flatnonzero(cheb <= 1)
            if in_range.size:
                victim = in_range[int(cheb[in_range].argmin())]  # nearest, lowest index
                rewards[i] += self.cfg.tag_reward
                self.tag_count += 1
                tagged_this_step += 1
                self.target_pos[victim] = self.rng.integers(0, g, size=2)
        # targets random-walk
        drift = MOVES[self.rng.integers(0, len(MOVES), size=self.cfg.n_targets)]
        self.target_pos = np.clip(self.target_pos + drift, 0, g - 1)
        return StepResult(rewards=rewards, done=False, alive=self.alive_mask(),
                          info={"tags": self.tag_count, "attempts": self.attempt_count,
                                "tags_step": tagged_this_step})

    def _observe(self, agent_id: int) -> np.ndarray:
        g = self.cfg.grid_size
        own = self.agent_pos[agent_id] / (g - 1)
        rel = (self.target_pos - self.agent_pos[agent_id]).astype(float)
        order = np.lexsort((np.arange(len(rel)), np.abs(rel).max(axis=1)))
        nearest = np.zeros((self.cfg.obs_targets, 2))
        take = order[:self.cfg.obs_targets]
        nearest[:take.size] = rel[take] / (g - 1)
        return np.concatenate([own, nearest.ravel()])

    def positions(self) -> np.ndarray:
        return self.agent_pos.copy()
