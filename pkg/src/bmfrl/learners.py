"""Q-learning and actor-critic learners over bi-level mean-field inputs.

Six algorithms share two update rules: bmf_q / mfq / iql are epsilon-greedy
Q-learners, bmf_ac / mfac / ac are softmax actor-critics. Mean-field variants
consume the same critic input layout [obs, intra, inter, flags]; plain mean
field fills the intra block with the all-peers mean and zeroes the inter
block, which makes BMF with k=1 reduce to MFQ bit for bit. Independent
learners drop the mean-field blocks entirely.

Batch rows are canonicalized (sorted by raw bytes) before every gradient
step, so updates depend only on the multiset of transitions: permuting agent
order in a batch leaves the updated parameters bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .meanfield import MeanFieldActions
from .nets import (
    AdamState,
    GradTape,
    NetDef,
    NetParams,
    adam_step,
    backward,
    forward,
    init_params,
)

Q_ALGOS = ("bmf_q", "mfq", "iql")
AC_ALGOS = ("bmf_ac", "mfac", "ac")
MF_ALGOS = ("bmf_q", "mfq", "bmf_ac", "mfac")
BMF_ALGOS = ("bmf_q", "bmf_ac")
ALGOS = Q_ALGOS + AC_ALGOS


@dataclass
class LearnerConfig:
    algo: str = "bmf_q"
    gamma: float = 0.95
    lr: float = 1e-3
    lr_actor: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    tau: float = 0.1              # Boltzmann backup temperature, 0 = greedy max
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 20_000
    target_sync: int = 200        # hard target copy every N updates
    polyak: float | None = None   # soft mixing instead of hard syncs
    batch_transitions: int = 256  # per-agent transitions per update
    replay_transitions: int = 65_536
    update_every: int = 16        # I_u, environment steps between updates

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; choose from {ALGOS}")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def uses_mf(self) -> bool:
        return self.algo in MF_ALGOS

    def epsilon(self, global_step: int) -> float:
        frac = min(1.0, global_step / max(1, self.eps_decay_steps))
        return self.eps_start + frac * (self.eps_end - self.eps_start)


# ---------------------------------------------------------------------------
# replay


@dataclass
class StepRecord:
    """One environment step for all agents, Algorithm-1 style."""

    obs: np.ndarray           # (n, do)
    actions: np.ndarray       # (n,), -1 for dead agents
    rewards: np.ndarray       # (n,)
    next_obs: np.ndarray      # (n, do)
    mf: MeanFieldActions      # aggregates the policies consumed at s
    mf_next: MeanFieldActions  # s'-side cache for the bootstrap target
    labels: np.ndarray        # (n,) group snapshot, -1 for dead
    alive: np.ndarray         # (n,) bool at s
    next_alive: np.ndarray    # (n,) bool at s'
    terminal: bool            # true terminal (not time-limit truncation)


class ReplayBuffer:
    """Ring buffer of step records with a uniform seeded sampler."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng
        self._data: list[StepRecord] = []
        self._idx = 0

    def push(self, record: StepRecord):
        if len(self._data) < self.capacity:
            self._data.append(record)
        else:
            self._data[self._idx] = record
        self._idx = (self._idx + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._data)

    def sample(self, n: int) -> list[StepRecord]:
        if len(self._data) < n:
            raise ValueError(f"buffer holds {len(self._data)} records, need {n}")
        idx = self.rng.integers(0, len(self._data), size=n)
        return [self._data[i] for i in idx]


# ---------------------------------------------------------------------------
# shared pieces


def boltzmann_values(q: np.ndarray, tau: float) -> np.ndarray:
    """Soft state value per row; tau=0 degenerates to a greedy max."""
    if tau <= 0.0:
        return q.max(axis=1)
    z = q / tau
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return (p * q).sum(axis=1)


def canonical_order(rows: np.ndarray) -> np.ndarray:
    """Permutation sorting rows by raw bytes (memcmp order, stable)."""
    flat = np.ascontiguousarray(rows)
    keyed = flat.view([("bytes", "V", flat.shape[1] * flat.itemsize)]).ravel()
    return np.argsort(keyed, kind="stable")


def _sample_discrete(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one uniform draw per row."""
    cdf = probs.cumsum(axis=1)
    return (u[:, None] > cdf).sum(axis=1).clip(0, probs.shape[1] - 1)


@dataclass
class Batch:
    x: np.ndarray        # critic inputs at s
    obs: np.ndarray      # raw observations at s (actor inputs)
    actions: np.ndarray
    rewards: np.ndarray
    x_next: np.ndarray   # critic inputs at s'
    bootstrap: np.ndarray


def flatten_records(records: list[StepRecord], uses_mf: bool) -> Batch:
    """Per-agent rows for all alive-at-s agents, byte-canonical order."""
    xs, obs, acts, rews, xs2, boot = [], [], [], [], [], []
    for rec in records:
        idx = np.flatnonzero(rec.alive)
        o = rec.obs[idx]
        if uses_mf:
            x = np.concatenate([rec.obs, rec.mf.rows()], axis=1)[idx]
            x2 = np.concatenate([rec.next_obs, rec.mf_next.rows()], axis=1)[idx]
        else:
            x = o
            x2 = rec.next_obs[idx]
        xs.append(x)
        obs.append(o)
        acts.append(rec.actions[idx])
        rews.append(rec.rewards[idx])
        xs2.append(x2)
        boot.append(rec.next_alive[idx] & (not rec.terminal))
    x = np.concatenate(xs)
    obs = np.concatenate(obs)
    a = np.concatenate(acts)
    r = np.concatenate(rews)
    x2 = np.concatenate(xs2)
    b = np.concatenate(boot).astype(float)
    key = np.concatenate([x, a[:, None].astype(float), r[:, None], x2, b[:, None]], axis=1)
    perm = canonical_order(key)
    return Batch(x=x[perm], obs=obs[perm], actions=a[perm], rewards=r[perm],
                 x_next=x2[perm], bootstrap=b[perm])


def critic_input_dim(obs_dim: int, n_actions: int, uses_mf: bool) -> int:
    return obs_dim + (2 * n_actions + 2 if uses_mf else 0)


def compose_inputs(obs_rows: np.ndarray, mfa: MeanFieldActions | None) -> np.ndarray:
    if mfa is None:
        return np.asarray(obs_rows, dtype=float)
    return np.concatenate([obs_rows, mfa.rows()], axis=1)


def q_target_loss_gradient(q_sa: np.ndarray, y: np.ndarray):
    """Mean squared TD error and d(loss)/d(q_sa)."""
    td = q_sa - y
    loss = float((td ** 2).mean())
    return loss, 2.0 * td / td.shape[0]


def critic_loss_and_tape(params: NetParams, x: np.ndarray, actions: np.ndarray,
                         y: np.ndarray):
    """L_q = mean_i (Q(x_i)[a_i] - y_i)^2 with its parameter gradient."""
    q = forward(params, x)
    rows = np.arange(q.shape[0])
    loss, dq = q_target_loss_gradient(q[rows, actions], y)
    gout = np.zeros_like(q)
    gout[rows, actions] = dq
    return loss, backward(params, x, gout)


def actor_loss_and_tape(actor: NetParams, obs_rows: np.ndarray, q_const: np.ndarray):
    """Negated policy objective -mean_i sum_a pi(a|s_i) q_i[a] with gradient.

    q_const is treated as a constant; for a softmax policy this surrogate's
    gradient equals the score-function form E[grad log pi * Q] exactly.
    """
    probs = forward(actor, obs_rows)
    loss = -float((probs * q_const).sum(axis=1).mean())
    tape = backward(actor, obs_rows, -q_const / q_const.shape[0])
    return loss, tape


def sync_target(online: NetParams, target: NetParams, polyak: float | None = None) -> NetParams:
    """Hard copy (default) or Polyak mix: target <- tau*online + (1-tau)*target."""
    if polyak is None:
        return online.copy()
    t = float(polyak)
    return NetParams(online.net_def, t * online.values + (1.0 - t) * target.values)


# ---------------------------------------------------------------------------
# learners


class QLearner:
    """Epsilon-greedy Q-learner (bmf_q, mfq, iql by input composition)."""

    def __init__(self, cfg: LearnerConfig, obs_dim: int, n_actions: int,
                 rng: np.random.Generator):
        if cfg.algo not in Q_ALGOS:
            raise ValueError(f"{cfg.algo} is not a Q-family algorithm")
        self.cfg = cfg
        self.n_actions = n_actions
        self.obs_dim = obs_dim
        in_dim = critic_input_dim(obs_dim, n_actions, cfg.uses_mf)
        self.critic = init_params(NetDef((in_dim, *cfg.hidden, n_actions)), rng)
        self.target = self.critic.copy()
        self.adam = AdamState.for_params(self.critic)
        self.update_count = 0

    def q_values(self, obs_rows, mfa: MeanFieldActions | None = None,
                 params: NetParams | None = None) -> np.ndarray:
        rows = compose_inputs(obs_rows, mfa if self.cfg.uses_mf else None)
        return forward(params or self.critic, rows)

    def critic_value(self, obs_row, action: int, mfa_row=None) -> float:
        """Q(s_j, a_j, intra, inter) for a single agent row."""
        rows = np.atleast_2d(obs_row) if mfa_row is None or not self.cfg.uses_mf else \
            np.concatenate([np.atleast_2d(obs_row), np.atleast_2d(mfa_row)], axis=1)
        return float(forward(self.critic, rows)[0, action])

    def act(self, obs_rows, mfa, alive, eps: float, rng: np.random.Generator) -> np.ndarray:
        """Greedy with eps exploration; dead agents get the sentinel action."""
        greedy = self.q_values(obs_rows, mfa).argmax(axis=1)
        n = greedy.shape[0]
        explore = rng.random(n) < eps
        randoms = rng.integers(0, self.n_actions, size=n)
        actions = np.where(explore, randoms, greedy)
        return np.where(np.asarray(alive, bool), actions, -1)

    def state_values(self, obs_rows, mfa: MeanFieldActions | None = None,
                     use_target: bool = False) -> np.ndarray:
        q = self.q_values(obs_rows, mfa, params=self.target if use_target else None)
        return boltzmann_values(q, self.cfg.tau)

    def update(self, records: list[StepRecord]) -> dict:
        batch = flatten_records(records, self.cfg.uses_mf)
        q2 = forward(self.target, batch.x_next)
        y = batch.rewards + self.cfg.gamma * batch.bootstrap * boltzmann_values(q2, self.cfg.tau)
        q = forward(self.critic, batch.x)
        rows = np.arange(q.shape[0])
        loss, dq = q_target_loss_gradient(q[rows, batch.actions], y)
        gout = np.zeros_like(q)
        gout[rows, batch.actions] = dq
        tape = backward(self.critic, batch.x, gout)
        self.critic = adam_step(self.critic, tape, self.adam, lr=self.cfg.lr)
        self.update_count += 1
        self._maybe_sync()
        return {"critic_loss": loss}

    def _maybe_sync(self):
        if self.cfg.polyak is not None:
            self.target = sync_target(self.critic, self.target, self.cfg.polyak)
        elif self.update_count % self.cfg.target_sync == 0:
            self.target = sync_target(self.critic, self.target)

    def named_params(self) -> dict[str, NetParams]:
        return {"critic": self.critic, "target": self.target}

    def load_params(self, named: dict[str, NetParams]):
        self.critic = named["critic"].copy()
        self.target = named.get("target", named["critic"]).copy()


class ACLearner:
    """Softmax actor-critic (bmf_ac, mfac, ac by input composition).

    The critic follows the Q-learner's target rule; the actor ascends the
    exact discrete expectation sum_a pi(a|s) Q(s, a, ...), which equals the
    score-function gradient E[grad log pi * Q] with Q held constant.
    """

    def __init__(self, cfg: LearnerConfig, obs_dim: int, n_actions: int,
                 rng: np.random.Generator):
        if cfg.algo not in AC_ALGOS:
            raise ValueError(f"{cfg.algo} is not an AC-family algorithm")
        self.cfg = cfg
        self.n_actions = n_actions
        self.obs_dim = obs_dim
        in_dim = critic_input_dim(obs_dim, n_actions, cfg.uses_mf)
        self.critic = init_params(NetDef((in_dim, *cfg.hidden, n_actions)), rng)
        self.target = self.critic.copy()
        self.actor = init_params(NetDef((obs_dim, *cfg.hidden, n_actions),
                                        activation="softmax_out"), rng)
        self.adam = AdamState.for_params(self.critic)
        self.adam_actor = AdamState.for_params(self.actor)
        self.update_count = 0

    def q_values(self, obs_rows, mfa: MeanFieldActions | None = None,
                 params: NetParams | None = None) -> np.ndarray:
        rows = compose_inputs(obs_rows, mfa if self.cfg.uses_mf else None)
        return forward(params or self.critic, rows)

    def policy(self, obs_rows) -> np.ndarray:
        return forward(self.actor, np.atleast_2d(obs_rows))

    def act(self, obs_rows, mfa, alive, eps: float, rng: np.random.Generator) -> np.ndarray:
        """Sample the stochastic policy; eps is unused (sampling explores)."""
        probs = self.policy(obs_rows)
        u = rng.random(probs.shape[0])
        actions = _sample_discrete(probs, u)
        return np.where(np.asarray(alive, bool), actions, -1)

    def greedy_act(self, obs_rows, alive) -> np.ndarray:
        actions = self.policy(obs_rows).argmax(axis=1)
        return np.where(np.asarray(alive, bool), actions, -1)

    def state_values(self, obs_rows, mfa: MeanFieldActions | None = None,
                     use_target: bool = False) -> np.ndarray:
        q = self.q_values(obs_rows, mfa, params=self.target if use_target else None)
        return boltzmann_values(q, self.cfg.tau)

    def update(self, records: list[StepRecord]) -> dict:
        batch = flatten_records(records, self.cfg.uses_mf)
        # critic first (Algorithm-1 ordering), same rule as the Q-learner
        q2 = forward(self.target, batch.x_next)
        y = batch.rewards + self.cfg.gamma * batch.bootstrap * boltzmann_values(q2, self.cfg.tau)
        q = forward(self.critic, batch.x)
        rows = np.arange(q.shape[0])
        closs, dq = q_target_loss_gradient(q[rows, batch.actions], y)
        gout = np.zeros_like(q)
        gout[rows, batch.actions] = dq
        tape = backward(self.critic, batch.x, gout)
        self.critic = adam_step(self.critic, tape, self.adam, lr=self.cfg.lr)
        # actor: ascend mean_i sum_a pi(a|s_i) Q(s_i, a, ...), Q frozen
        q_const = forward(self.critic, batch.x)
        probs = forward(self.actor, batch.obs)
        aloss = -float((probs * q_const).sum(axis=1).mean())
        atape = backward(self.actor, batch.obs, -q_const / q_const.shape[0])
        self.actor = adam_step(self.actor, atape, self.adam_actor, lr=self.cfg.lr_actor)
        self.update_count += 1
        self._maybe_sync()
        return {"critic_loss": closs, "actor_loss": aloss}

    def _maybe_sync(self):
        if self.cfg.polyak is not None:
            self.target = sync_target(self.critic, self.target, self.cfg.polyak)
        elif self.update_count % self.cfg.target_sync == 0:
            self.target = sync_target(self.critic, self.target)

    def named_params(self) -> dict[str, NetParams]:
        return {"critic": self.critic, "target": self.target, "actor": self.actor}

    def load_params(self, named: dict[str, NetParams]):
        self.critic = named["critic"].copy()
        self.target = named.get("target", named["critic"]).copy()
        self.actor = named["actor"].copy()


class GaussianActor:
    """Continuous policy head: learned mean, fixed sigma, score-function update.

    None of the shipped environments are continuous; this realizes the
    continuous half of the actor contract (log-prob clamped at -30).
    """

    LOGP_FLOOR = -30.0

    def __init__(self, obs_dim: int, act_dim: int, hidden, sigma: float,
                 rng: np.random.Generator, lr: float = 3e-4):
        self.net = init_params(NetDef((obs_dim, *hidden, act_dim), activation="tanh"), rng)
        self.sigma = float(sigma)
        self.adam = AdamState.for_params(self.net)
        self.lr = lr

    def mean(self, obs_rows) -> np.ndarray:
        return forward(self.net, np.atleast_2d(obs_rows))

    def act(self, obs_rows, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(obs_rows)
        return mu + self.sigma * rng.standard_normal(mu.shape)

    def log_prob(self, obs_rows, actions) -> np.ndarray:
        mu = self.mean(obs_rows)
        d = np.atleast_2d(actions) - mu
        logp = -0.5 * (d ** 2).sum(axis=1) / self.sigma ** 2 \
            - 0.5 * mu.shape[1] * np.log(2 * np.pi * self.sigma ** 2)
        return np.maximum(logp, self.LOGP_FLOOR)

    def surrogate(self, obs_rows, actions, q_const) -> float:
        return float((self.log_prob(obs_rows, actions) * np.asarray(q_const)).mean())

    def update(self, obs_rows, actions, q_const) -> float:
        obs_rows = np.atleast_2d(obs_rows)
        actions = np.atleast_2d(actions)
        q_const = np.asarray(q_const, dtype=float)
        mu = self.mean(obs_rows)
        d = actions - mu
        raw = -0.5 * (d ** 2).sum(axis=1) / self.sigma ** 2 \
            - 0.5 * mu.shape[1] * np.log(2 * np.pi * self.sigma ** 2)
        live = raw > self.LOGP_FLOOR  # clamped rows carry no gradient
        n = obs_rows.shape[0]
        gout = -(q_const * live)[:, None] * d / self.sigma ** 2 / n  # minimize -J
        tape = backward(self.net, obs_rows, gout)
        self.net = adam_step(self.net, tape, self.adam, lr=self.lr)
        return self.surrogate(obs_rows, actions, q_const)


def make_learner(cfg: LearnerConfig, obs_dim: int, n_actions: int,
                 rng: np.random.Generator):
    if cfg.algo in Q_ALGOS:
        return QLearner(cfg, obs_dim, n_actions, rng)
    return ACLearner(cfg, obs_dim, n_actions, rng)
