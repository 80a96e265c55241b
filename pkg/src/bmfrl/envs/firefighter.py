"""Cooperative firefighting: fixed agents extinguish burning houses.

Every burning house loses 1 fire value per step; each agent can pour water on
one of its w nearest houses (+1 per attending agent, capped at 0). A house
that reaches 0 is extinguished for good. The shared team reward each step is
the change in total house value, split equally; the undiscounted episode
return therefore tracks the final total fire condition up to a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import MultiAgentEnv, StepResult


@dataclass
class FirefighterConfig:
    n_agents: int = 50
    n_houses: int = 50
    grid_size: int = 20
    max_steps: int = 40
    init_value: float = -3.0
    houses_per_agent: int = 4  # w nearest houses an agent can reach
    seed: int = 0

    def validate(self):
        if self.n_agents < 2:
            raise ValueError("need at least 2 agents")
        if self.n_houses < self.houses_per_agent:
            raise ValueError("need at least houses_per_agent houses")
        if self.init_value > 0:
            raise ValueError("house fire values must be <= 0")


class FirefighterEnv(MultiAgentEnv):
    def __init__(self, config: FirefighterConfig | None = None,
                 rng: np.random.Generator | None = None):
        cfg = config or FirefighterConfig()
        cfg.validate()
        super().__init__(rng or np.random.default_rng(cfg.seed))
        self.cfg = cfg
        self.n_agents = cfg.n_agents
        self.n_actions = 1 + cfg.houses_per_agent  # no-op + one slot per reachable house
        self.obs_dim = 2 + cfg.houses_per_agent
        self.max_steps = cfg.max_steps
        self._value_scale = abs(cfg.init_value) + cfg.max_steps
        self._place()
        self.reset()

    def _place(self):
        """Fixed layout drawn once per instance: agents and houses on the grid."""
        g = self.cfg.grid_size
        cells = self.rng.choice(g * g, size=self.cfg.n_agents + self.cfg.n_houses,
                                replace=False)
        coords = np.stack([cells // g, cells % g], axis=1).astype(float)
        self.agent_pos = coords[:self.cfg.n_agents]
        self.house_pos = coords[self.cfg.n_agents:]
        self._assign_houses()

    def _assign_houses(self):
        """w nearest houses per agent, ordered by distance then house index."""
        d = np.linalg.norm(self.agent_pos[:, None, :] - self.house_pos[None, :, :], axis=2)
        self.agent_houses = np.argsort(d, axis=1, kind="stable")[:, :self.cfg.houses_per_agent]

    def set_layout(self, agent_pos, house_pos, house_values=None):
        """Explicit layout injection (symmetry tests, hand-built scenarios)."""
        self.agent_pos = np.asarray(agent_pos, dtype=float)
        self.house_pos = np.asarray(house_pos, dtype=float)
        self._assign_houses()
        if house_values is not None:
            self.values = np.asarray(house_values, dtype=float)
            self.extinguished = self.values >= 0.0

    def _reset(self):
        self.values = np.full(self.cfg.n_houses, float(self.cfg.init_value))
        self.extinguished = np.zeros(self.cfg.n_houses, dtype=bool)

    def _step(self, actions) -> StepResult:
        before = self.values.sum()
        # burning houses first lose one unit of value
        burning = ~self.extinguished
        self.values[burning] -= 1.0
        # then attendance: +1 per attending agent, capped at 0
        attend = np.zeros(self.values.shape[0])
        for i, a in enumerate(actions):
            if a > 0:
                attend[self.agent_houses[i, a - 1]] += 1.0
        active = (attend > 0) & ~self.extinguished
        self.values[active] = np.minimum(self.values[active] + attend[active], 0.0)
        self.extinguished |= self.values >= 0.0

        delta = self.values.sum() - before
        rewards = np.full(self.n_agents, delta / self.n_agents)
        done = bool(self.extinguished.all())
        return StepResult(rewards=rewards, done=done, alive=self.alive_mask(),
                          info={"fire_total": float(self.values.sum()),
                                "extinguished": int(self.extinguished.sum())})

    def _observe(self, agent_id: int) -> np.ndarray:
        g = self.cfg.grid_size - 1
        own = self.agent_pos[agent_id] / max(g, 1)
        vals = self.values[self.agent_houses[agent_id]] / self._value_scale
        return np.concatenate([own, vals])

    def positions(self) -> np.ndarray:
        return self.agent_pos.astype(np.int64)
