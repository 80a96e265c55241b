"""Two-team grid combat in the MAgent style.

Agents move or strike one of four adjacent cells; hits deal fixed damage and
a kill pays the team bonus to the killer. Small shaping rewards (landed hit,
received hit, per-step survival cost) are config-exposed since the source
material leaves them unquantified. Observations are egocentric and
fixed-size, so one policy transfers across team sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import MultiAgentEnv, StepResult

DIRS = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])  # N, S, W, E


@dataclass
class BattleConfig:
    n_agents: int = 128
    grid_size: int = 40
    max_steps: int = 150
    max_hp: float = 10.0
    damage: float = 2.0
    kill_reward: float = 5.0
    hit_reward: float = 0.2
    hurt_penalty: float = -0.1
    step_cost: float = -0.005
    obs_enemies: int = 3
    obs_allies: int = 3
    seed: int = 0

    def validate(self):
        if self.n_agents < 2 or self.n_agents % 2 != 0:
            raise ValueError("battle needs an even number of agents >= 2 (two equal teams)")
        if self.n_agents > self.grid_size * self.grid_size:
            raise ValueError("grid too small for the agent count")


class BattleEnv(MultiAgentEnv):
    # actions: 0 noop, 1-4 move, 5-8 attack (N, S, W, E)
    N_MOVE = 4

    def __init__(self, config: BattleConfig | None = None,
                 rng: np.random.Generator | None = None):
        cfg = config or BattleConfig()
        cfg.validate()
        super().__init__(rng or np.random.default_rng(cfg.seed))
        self.cfg = cfg
        self.n_agents = cfg.n_agents
        self.n_actions = 9
        self.obs_dim = 3 + 3 * cfg.obs_enemies + 3 * cfg.obs_allies
        self.max_steps = cfg.max_steps
        self.team = np.zeros(cfg.n_agents, dtype=np.int64)
        self.team[cfg.n_agents // 2:] = 1
        self.reset()

    def teams(self) -> np.ndarray:
        return self.team.copy()

    def _reset(self):
        g = self.cfg.grid_size
        half = self.n_agents // 2
        w = g // 2
        # team 0 spawns in the left band, team 1 in the right band
        left = self.rng.choice(w * g, size=half, replace=False)
        right = self.rng.choice(w * g, size=half, replace=False)
        pos = np.zeros((self.n_agents, 2), dtype=np.int64)
        pos[:half, 0] = left // g
        pos[:half, 1] = left % g
        pos[half:, 0] = right // g + (g - w)
        pos[half:, 1] = right % g
        self.pos = pos
        self.hp = np.full(self.n_agents, self.cfg.max_hp)
        self.kills = np.zeros(2, dtype=np.int64)
        self._occ = {tuple(p): i for i, p in enumerate(self.pos)}

    def _step(self, actions) -> StepResult:
        g = self.cfg.grid_size
        rewards = np.zeros(self.n_agents)
        alive_idx = np.flatnonzero(self._alive)
        rewards[alive_idx] += self.cfg.step_cost

        # moves, processed in a seeded random order; blocked cells stall
        order = alive_idx[self.rng.permutation(alive_idx.size)]
        for i in order:
            a = actions[i]
            if 1 <= a <= self.N_MOVE:
                nxt = self.pos[i] + DIRS[a - 1]
                if 0 <= nxt[0] < g and 0 <= nxt[1] < g and tuple(nxt) not in self._occ:
                    del self._occ[tuple(self.pos[i])]
                    self.pos[i] = nxt
                    self._occ[tuple(nxt)] = i

        # attacks, in agent-id order against post-move positions
        kills_step = 0
        for i in alive_idx:
            a = actions[i]
            if a <= self.N_MOVE or not self._alive[i]:
                continue
            cell = tuple(self.pos[i] + DIRS[a - self.N_MOVE - 1])
            victim = self._occ.get(cell)
            if victim is None or not self._alive[victim] or self.team[victim] == self.team[i]:
                continue
            self.hp[victim] -= self.cfg.damage
            rewards[i] += self.cfg.hit_reward
            rewards[victim] += self.cfg.hurt_penalty
            if self.hp[victim] <= 0.0:
                self._alive[victim] = False
                del self._occ[tuple(self.pos[victim])]
                rewards[i] += self.cfg.kill_reward
                self.kills[self.team[i]] += 1
                kills_step += 1

        alive_per_team = np.array([int(self._alive[self.team == t].sum()) for t in (0, 1)])
        done = bool((alive_per_team == 0).any())
        return StepResult(rewards=rewards, done=done, alive=self.alive_mask(),
                          info={"kills": self.kills.copy(),
                                "alive_per_team": alive_per_team,
                                "kills_step": kills_step,
                                "terminal": done})

    def _observe(self, agent_id: int) -> np.ndarray:
        g = self.cfg.grid_size - 1
        cfg = self.cfg
        own = np.array([self.pos[agent_id, 0] / g, self.pos[agent_id, 1] / g,
                        self.hp[agent_id] / cfg.max_hp])
        feats = [own]
        for mates, count in ((False, cfg.obs_enemies), (True, cfg.obs_allies)):
            mask = self._alive & ((self.team == self.team[agent_id]) == mates)
            mask[agent_id] = False
            idx = np.flatnonzero(mask)
            rel = (self.pos[idx] - self.pos[agent_id]).astype(float)
            order = np.lexsort((idx, np.abs(rel).max(axis=1)))[:count]
            block = np.zeros((count, 3))
            for slot, o in enumerate(order):
                block[slot, :2] = rel[o] / g
                block[slot, 2] = self.hp[idx[o]] / cfg.max_hp
            feats.append(block.ravel())
        return np.concatenate(feats)

    def positions(self) -> np.ndarray:
        out = np.full((self.n_agents, 2), -1, dtype=np.int64)
        out[self._alive] = self.pos[self._alive]
        return out
