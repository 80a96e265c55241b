"""Environment tests: paper-stated setups, reward rules, invariants, determinism."""

import numpy as np
import pytest

from bmfrl.envs import (
    DEAD_ACTION,
    BattleConfig,
    BattleEnv,
    DeadAgentError,
    FirefighterConfig,
    FirefighterEnv,
    InvalidActionError,
    PursuitConfig,
    PursuitEnv,
    episode_return,
    make_env,
)


def small_battle(n=4, grid=8, seed=0, **kw):
    return BattleEnv(BattleConfig(n_agents=n, grid_size=grid, seed=seed, **kw))


def place_battle(env, positions, hp=None):
    """Pin agent positions (and optionally hp) for hand-built scenarios."""
    env.pos = np.array(positions, dtype=np.int64)
    env._occ = {tuple(p): i for i, p in enumerate(env.pos) if env._alive[i]}
    if hp is not None:
        env.hp = np.array(hp, dtype=float)


# -- defaults straight from the experimental setup ---------------------------

def test_firefighter_defaults():
    env = FirefighterEnv()
    assert env.n_agents == 50
    assert env.values.shape == (50,)
    assert np.all(env.values == -3.0)


def test_pursuit_defaults():
    env = PursuitEnv()
    assert env.n_agents == 25
    assert env.target_pos.shape == (50, 2)


def test_battle_defaults():
    env = BattleEnv()
    assert env.n_agents == 128
    assert (env.team == 0).sum() == 64
    assert (env.team == 1).sum() == 64


def test_battle_odd_agents_rejected():
    with pytest.raises(ValueError):
        BattleConfig(n_agents=7).validate()


# -- firefighter mechanics ----------------------------------------------------

def test_firefighter_noop_decrements_every_house():
    env = FirefighterEnv(FirefighterConfig(n_agents=4, n_houses=6, grid_size=8, seed=1))
    before = env.values.copy()
    env.step(np.zeros(4, dtype=int))
    np.testing.assert_array_equal(env.values, before - 1.0)


def test_firefighter_monotone_decrease_without_extinguishing():
    env = FirefighterEnv(FirefighterConfig(n_agents=4, n_houses=6, grid_size=8, seed=2))
    total = env.values.sum()
    for _ in range(5):
        burning = (~env.extinguished).sum()
        env.step(np.zeros(4, dtype=int))
        new_total = env.values.sum()
        assert new_total == total - burning
        total = new_total


def test_firefighter_extinguish_caps_at_zero_and_sticks():
    env = FirefighterEnv(FirefighterConfig(n_agents=4, n_houses=6, grid_size=8,
                                           init_value=-1.0, seed=3))
    h = env.agent_houses[0, 0]
    # after burn (-2), four attendances needed to reach 0; send all 4 agents if shared
    env.values[:] = -1.0
    acts = np.zeros(4, dtype=int)
    acts[0] = 1
    env.step(acts)  # burn to -2, +1 from agent 0 -> -1
    assert env.values[h] == -1.0
    env.values[h] = -1.0
    env.extinguished[:] = False
    # two attending agents on the same house: give agent 1 the same house slot
    env.agent_houses[1, 0] = h
    acts = np.zeros(4, dtype=int)
    acts[0] = acts[1] = 1
    env.step(acts)  # -2 then +2 -> 0, extinguished
    assert env.values[h] == 0.0
    assert env.extinguished[h]
    v = env.values[h]
    env.step(np.zeros(4, dtype=int))
    assert env.values[h] == v  # extinguished houses stop burning


def test_firefighter_shared_reward_is_total_delta():
    env = FirefighterEnv(FirefighterConfig(n_agents=4, n_houses=6, grid_size=8, seed=4))
    before = env.values.sum()
    res = env.step(np.zeros(4, dtype=int))
    delta = env.values.sum() - before
    np.testing.assert_allclose(res.rewards, delta / 4)


def test_firefighter_mirrored_observation_symmetry():
    cfg = FirefighterConfig(n_agents=2, n_houses=8, grid_size=11, houses_per_agent=4, seed=5)
    env = FirefighterEnv(cfg)
    # agent 0 near x=2 with 4 houses at distinct ranges; agent 1 + houses mirrored over x=5
    a0 = [2.0, 3.0]
    houses0 = np.array([[2.0, 4.0], [1.0, 2.0], [3.0, 1.0], [0.0, 5.0]])
    mirror = lambda p: np.array([10.0 - p[0], p[1]])
    a1 = mirror(a0)
    houses1 = np.array([mirror(h) for h in houses0])
    values = np.array([-3.0, -2.0, -4.0, -1.0] * 2)
    env.set_layout(np.array([a0, a1]), np.vstack([houses0, houses1]), values)
    o0 = env.observe(0)
    o1 = env.observe(1)
    assert abs(o1[0] - (1.0 - o0[0])) < 1e-12  # x reflected
    np.testing.assert_allclose(o1[1:], o0[1:], atol=1e-12)  # y + house values equal


# -- pursuit mechanics --------------------------------------------------------

def test_pursuit_tag_miss_costs_penalty():
    env = PursuitEnv(PursuitConfig(n_agents=2, n_targets=1, grid_size=30, seed=6))
    env.agent_pos = np.array([[0, 0], [29, 29]])
    env.target_pos = np.array([[15, 15]])  # out of range of both
    res = env.step(np.array([5, 0]))
    assert res.rewards[0] == pytest.approx(-0.2)
    assert res.rewards[1] == 0.0


def test_pursuit_tag_success_net_reward_and_respawn():
    env = PursuitEnv(PursuitConfig(n_agents=2, n_targets=1, grid_size=30, seed=7))
    env.agent_pos = np.array([[10, 10], [0, 0]])
    env.target_pos = np.array([[10, 11]])
    res = env.step(np.array([5, 0]))
    assert res.rewards[0] == pytest.approx(1.0 - 0.2)
    assert res.info["tags"] == 1


def test_pursuit_accounting_identity():
    cfg = PursuitConfig(n_agents=6, n_targets=10, grid_size=10, max_steps=30, seed=8)
    env = PursuitEnv(cfg)
    rng = np.random.default_rng(0)
    total = 0.0
    for _ in range(cfg.max_steps):
        res = env.step(rng.integers(0, 6, size=6))
        total += res.rewards.sum()
        if res.done:
            break
    expect = env.tag_count * cfg.tag_reward - env.attempt_count * cfg.tag_penalty
    assert total == pytest.approx(expect, abs=1e-9)


# -- battle mechanics ---------------------------------------------------------

def test_battle_kill_grants_five():
    env = small_battle()
    place_battle(env, [[5, 5], [1, 1], [4, 5], [7, 7]], hp=[10, 10, 2, 10])
    res = env.step(np.array([5, 0, 0, 0]))  # agent 0 attacks north into (4, 5)
    assert res.rewards[0] == pytest.approx(5.0 + 0.2 - 0.005)
    assert not res.alive[2]
    assert env.kills[0] == 1


def test_battle_hit_and_hurt_shaping():
    env = small_battle()
    place_battle(env, [[5, 5], [1, 1], [4, 5], [7, 7]], hp=[10, 10, 10, 10])
    res = env.step(np.array([5, 0, 0, 0]))
    assert res.rewards[0] == pytest.approx(0.2 - 0.005)
    assert res.rewards[2] == pytest.approx(-0.1 - 0.005)
    assert env.hp[2] == 8.0


def test_battle_dead_agent_rules():
    env = small_battle()
    place_battle(env, [[5, 5], [1, 1], [4, 5], [7, 7]], hp=[10, 10, 2, 10])
    env.step(np.array([5, 0, 0, 0]))
    with pytest.raises(DeadAgentError):
        env.observe(2)
    with pytest.raises(DeadAgentError):
        env.step(np.array([0, 0, 1, 0]))
    res = env.step(np.array([0, 0, DEAD_ACTION, 0]))  # sentinel accepted
    assert res.alive.tolist() == [True, True, False, True]
    assert env.observe_all()[2].tolist() == [0.0] * env.obs_dim


def test_battle_kill_conservation():
    env = BattleEnv(BattleConfig(n_agents=8, grid_size=6, max_steps=80, seed=9))
    rng = np.random.default_rng(1)
    while True:
        acts = np.where(env.alive_mask(), rng.integers(0, 9, size=8), DEAD_ACTION)
        res = env.step(acts)
        if res.done:
            break
    assert env.kills.sum() == 8 - env.alive_mask().sum()


def test_battle_team_sizes_only_decrease():
    env = BattleEnv(BattleConfig(n_agents=8, grid_size=6, max_steps=40, seed=10))
    rng = np.random.default_rng(2)
    prev = np.array([4, 4])
    for _ in range(40):
        acts = np.where(env.alive_mask(), rng.integers(0, 9, size=8), DEAD_ACTION)
        res = env.step(acts)
        cur = res.info["alive_per_team"]
        assert np.all(cur <= prev)
        prev = cur
        if res.done:
            break


def test_battle_move_blocked_by_occupied_cell():
    env = small_battle()
    place_battle(env, [[5, 5], [4, 5], [1, 1], [7, 7]])
    env.step(np.array([1, 0, 0, 0]))  # agent 0 tries to move north into agent 1
    assert env.pos[0].tolist() == [5, 5]


# -- shared interface ---------------------------------------------------------

def test_invalid_actions_rejected():
    env = FirefighterEnv(FirefighterConfig(n_agents=3, n_houses=5, grid_size=8, seed=11))
    with pytest.raises(InvalidActionError):
        env.step(np.array([0, 0, 9]))
    with pytest.raises(InvalidActionError):
        env.step(np.array([0, 0]))


def test_seed_determinism_identical_trajectories():
    for name in ("firefighter", "pursuit", "battle"):
        kw = {"n_agents": 4, "grid_size": 8, "seed": 12}
        if name == "pursuit":
            kw["n_targets"] = 6
        if name == "firefighter":
            kw["n_houses"] = 6
        e1, e2 = make_env(name, **kw), make_env(name, **kw)
        o1, o2 = e1.reset(), e2.reset()
        np.testing.assert_array_equal(o1, o2)
        rng = np.random.default_rng(3)
        for _ in range(10):
            acts = np.where(e1.alive_mask(), rng.integers(0, e1.n_actions, size=4), DEAD_ACTION)
            r1 = e1.step(acts)
            r2 = e2.step(acts)
            np.testing.assert_array_equal(r1.rewards, r2.rewards)
            np.testing.assert_array_equal(e1.observe_all(), e2.observe_all())
            if r1.done:
                break


def test_make_env_unknown():
    with pytest.raises(ValueError):
        make_env("chess")


# -- episode return -----------------------------------------------------------

def test_episode_return_undiscounted():
    r = episode_return([1.0, 1.0, 1.0], gamma=1.0)
    assert r.discounted == 3.0
    assert r.undiscounted == 3.0


def test_episode_return_discounted():
    r = episode_return([1.0, 1.0], gamma=0.5)
    assert r.discounted == 1.5


def test_episode_return_zeros():
    r = episode_return(np.zeros(5), gamma=0.9)
    assert r.discounted == 0.0
    assert r.undiscounted == 0.0
