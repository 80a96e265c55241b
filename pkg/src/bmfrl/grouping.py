"""Agent-representation learning and dynamic group assignment.

A small VAE-style forward model embeds each agent's (observation, action)
pair; a reconstruction term, a one-step value-prediction term and a KL
regularizer train it jointly. Groups come from periodic k-means over the
latent means, and a scaled dot-product attention over group centroids
produces the inter-group coupling weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import GradientError, NetDef, NetParams, backward, forward, init_params

LOGVAR_CLIP = 8.0


@dataclass
class ForwardModelConfig:
    obs_dim: int
    act_dim: int
    latent_dim: int = 4
    hidden: tuple[int, ...] = (32,)
    lambda_p: float = 1.0     # reconstruction weight
    lambda_e: float = 0.5     # value-prediction weight
    beta: float = 0.01        # KL weight
    variational: bool = True  # False -> plain AE (no sampling, no KL)

    @property
    def in_dim(self) -> int:
        return self.obs_dim + self.act_dim


@dataclass
class ForwardModel:
    cfg: ForwardModelConfig
    encoder: NetParams    # (obs, act) -> (mu, logvar)
    decoder: NetParams    # z -> (obs, act) reconstruction
    predictor: NetParams  # (z, obs) -> scalar next-state value estimate


def make_forward_model(cfg: ForwardModelConfig, rng: np.random.Generator) -> ForwardModel:
    lat, hid = cfg.latent_dim, cfg.hidden
    enc = init_params(NetDef((cfg.in_dim, *hid, 2 * lat), activation="tanh"), rng)
    dec = init_params(NetDef((lat, *hid, cfg.in_dim), activation="tanh"), rng)
    pred = init_params(NetDef((lat + cfg.obs_dim, *hid, 1), activation="tanh"), rng)
    return ForwardModel(cfg=cfg, encoder=enc, decoder=dec, predictor=pred)


def _encode_meanvar(fm: ForwardModel, x_rows: np.ndarray):
    out = forward(fm.encoder, x_rows)
    lat = fm.cfg.latent_dim
    mu = out[:, :lat]
    lv_raw = out[:, lat:]
    lv = np.clip(lv_raw, -LOGVAR_CLIP, LOGVAR_CLIP)
    lv_mask = (lv_raw > -LOGVAR_CLIP) & (lv_raw < LOGVAR_CLIP)
    return mu, lv, lv_mask


def encode(fm: ForwardModel, obs: np.ndarray, act_onehot: np.ndarray,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Latent representation of (obs, action) rows.

    With an rng (training mode, variational model) samples via the
    reparameterization trick; otherwise returns the deterministic mean,
    which is what clustering consumes.
    """
    x = np.concatenate([np.atleast_2d(obs), np.atleast_2d(act_onehot)], axis=1)
    mu, lv, _ = _encode_meanvar(fm, x)
    if rng is not None and fm.cfg.variational:
        return mu + np.exp(0.5 * lv) * rng.standard_normal(mu.shape)
    return mu


def forward_model_loss(fm: ForwardModel, obs, act_onehot, rewards, next_values,
                       gamma: float, noise: np.ndarray | None = None):
    """Combined loss and analytic gradients for encoder/decoder/predictor.

    loss = mean_i[ lambda_p * ||dec(z_i) - x_i||^2
                 + lambda_e * (pred(z_i, s_i) + r_i - gamma * V(s'_i))^2
                 + beta * KL(q(z|x_i) || N(0, I)) ]

    noise supplies the reparameterization draws (rows x latent); pass None for
    deterministic (AE / evaluation) encoding. next_values are treated as
    constants. Returns (loss, grads dict, parts dict).
    """
    cfg = fm.cfg
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    act_onehot = np.atleast_2d(np.asarray(act_onehot, dtype=float))
    rewards = np.asarray(rewards, dtype=float).ravel()
    next_values = np.asarray(next_values, dtype=float).ravel()
    x = np.concatenate([obs, act_onehot], axis=1)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")

    mu, lv, lv_mask = _encode_meanvar(fm, x)
    variational = cfg.variational and noise is not None
    if variational:
        std = np.exp(0.5 * lv)
        z = mu + std * noise
    else:
        z = mu

    recon = forward(fm.decoder, z)
    rec_err = recon - x
    rec_terms = (rec_err ** 2).sum(axis=1)

    pin = np.concatenate([z, obs], axis=1)
    pred = forward(fm.predictor, pin)[:, 0]
    resid = pred + rewards - gamma * next_values
    pred_terms = resid ** 2

    if variational:
        kl_terms = 0.5 * (mu ** 2 + np.exp(lv) - lv - 1.0).sum(axis=1)
    else:
        kl_terms = np.zeros(n)

    row_loss = cfg.lambda_p * rec_terms + cfg.lambda_e * pred_terms + cfg.beta * kl_terms
    bad = np.flatnonzero(~np.isfinite(row_loss))
    if bad.size:
        raise GradientError(f"non-finite forward-model loss at batch index {int(bad[0])}")
    loss = float(row_loss.mean())

    # backprop: decoder and predictor heads, then chain into the encoder
    dec_tape = backward(fm.decoder, z, (2.0 * cfg.lambda_p / n) * rec_err)
    pred_gout = ((2.0 * cfg.lambda_e / n) * resid)[:, None]
    pred_tape = backward(fm.predictor, pin, pred_gout)
    dz = dec_tape.input_grad + pred_tape.input_grad[:, :cfg.latent_dim]

    if variational:
        dmu = dz + (cfg.beta / n) * mu
        dlv = (dz * 0.5 * std * noise + (cfg.beta / n) * 0.5 * (np.exp(lv) - 1.0)) * lv_mask
    else:
        dmu = dz
        dlv = np.zeros_like(lv)
    enc_tape = backward(fm.encoder, x, np.concatenate([dmu, dlv], axis=1))

    grads = {"encoder": enc_tape.values, "decoder": dec_tape.values, "predictor": pred_tape.values}
    parts = {
        "reconstruction": float(rec_terms.mean()),
        "prediction": float(pred_terms.mean()),
        "kl": float(kl_terms.mean()),
    }
    return loss, grads, parts


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss_history: list[float]
    n_iter: int
    repairs: int


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; degenerate (all-identical) inputs fall back to random picks."""
    n = points.shape[0]
    centroids = [points[int(rng.integers(n))]]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centroids)


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 50, init: np.ndarray | None = None) -> KMeansResult:
    """Lloyd's algorithm with deterministic empty-cluster repair.

    An empty cluster steals the point farthest from the largest cluster's
    centroid (ties broken by lowest index), so every group stays populated.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    centroids = np.array(init, dtype=float) if init is not None else kmeans_pp_init(points, k, rng)
    if centroids.shape != (k, points.shape[1]):
        raise ValueError(f"init centroids shape {centroids.shape} != {(k, points.shape[1])}")

    labels = None
    history: list[float] = []
    repairs = 0
    it = 0
    for it in range(1, max_iter + 1):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        counts = np.bincount(new_labels, minlength=k)
        for m in range(k):
            if counts[m] == 0:
                donor = int(counts.argmax())
                members = np.flatnonzero(new_labels == donor)
                steal = members[int(d2[members, donor].argmax())]
                new_labels[steal] = m
                counts[donor] -= 1
                counts[m] += 1
                repairs += 1
        for m in range(k):
            centroids[m] = points[new_labels == m].mean(axis=0)
        history.append(float(((points - centroids[new_labels]) ** 2).sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            labels = new_labels
            break
        labels = new_labels
    return KMeansResult(labels=labels, centroids=centroids, wcss_history=history,
                        n_iter=it, repairs=repairs)


# ---------------------------------------------------------------------------
# group attention and assignment state


@dataclass
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray


def make_attention(latent_dim: int, rng: np.random.Generator) -> AttentionParams:
    scale = 1.0 / np.sqrt(latent_dim)
    return AttentionParams(w_q=rng.normal(0.0, scale, (latent_dim, latent_dim)),
                           w_k=rng.normal(0.0, scale, (latent_dim, latent_dim)))


def attention_weights(att: AttentionParams, centroids: np.ndarray):
    """exp(scaled dot-product) weights over group centroids, zero diagonal.

    Scores are shifted per row before exponentiating; raw weights are therefore
    defined up to a per-row scale, which the normalizers W_m absorb.
    """
    k = centroids.shape[0]
    w = np.zeros((k, k))
    if k >= 2:
        d = centroids.shape[1]
        q = centroids @ att.w_q
        kk = centroids @ att.w_k
        scores = (q @ kk.T) / np.sqrt(d)
        off = ~np.eye(k, dtype=bool)
        shift = np.where(off, scores, -np.inf).max(axis=1, keepdims=True)
        w = np.exp(scores - shift) * off
    return w, w.sum(axis=1)


@dataclass
class GroupState:
    """Current partition: labels (-1 for unassigned/dead), centroids, attention."""

    k: int
    labels: np.ndarray
    centroids: np.ndarray
    weights: np.ndarray
    normalizers: np.ndarray
    last_assign_step: int = 0

    def n_nonempty(self, alive) -> int:
        idx = self.labels[np.asarray(alive, dtype=bool)]
        return int(np.unique(idx[idx >= 0]).size)


def single_group_state(n: int, latent_dim: int) -> GroupState:
    return GroupState(k=1, labels=np.zeros(n, dtype=np.int64),
                      centroids=np.zeros((1, latent_dim)), weights=np.zeros((1, 1)),
                      normalizers=np.zeros(1))


def random_group_state(n: int, k: int, latent_dim: int, alive,
                       rng: np.random.Generator, att: AttentionParams | None = None,
                       step: int = 0) -> GroupState:
    """Uniformly random fixed partition (the no-grouping-module ablation)."""
    alive = np.asarray(alive, dtype=bool)
    labels = np.full(n, -1, dtype=np.int64)
    idx = rng.permutation(np.flatnonzero(alive))
    labels[idx] = np.arange(idx.size) % k
    centroids = np.zeros((k, latent_dim))
    if att is not None:
        w, norm = attention_weights(att, centroids)
    else:
        w = np.ones((k, k)) - np.eye(k)
        norm = w.sum(axis=1)
    return GroupState(k=k, labels=labels, centroids=centroids, weights=w,
                      normalizers=norm, last_assign_step=step)


def assign_groups(fm: ForwardModel, att: AttentionParams, obs, act_onehot, alive,
                  k: int, rng: np.random.Generator, prev: GroupState | None = None,
                  step: int = 0) -> GroupState:
    """Encode alive agents (mean mode) and cluster; previous centroids seed Lloyd."""
    alive = np.asarray(alive, dtype=bool)
    n = alive.shape[0]
    idx = np.flatnonzero(alive)
    if idx.size < k:
        raise ValueError(f"cannot form k={k} groups from {idx.size} alive agents")
    reps = encode(fm, np.atleast_2d(obs)[idx], np.atleast_2d(act_onehot)[idx])
    init = None
    if prev is not None and prev.centroids.shape == (k, fm.cfg.latent_dim):
        init = prev.centroids.copy()
    km = kmeans(reps, k, rng, init=init)
    labels = np.full(n, -1, dtype=np.int64)
    labels[idx] = km.labels
    w, norm = attention_weights(att, km.centroids)
    return GroupState(k=k, labels=labels, centroids=km.centroids, weights=w,
                      normalizers=norm, last_assign_step=step)


def maybe_reassign(step: int, interval: int, prev: GroupState, fm, att, obs,
                   act_onehot, alive, k: int, rng: np.random.Generator) -> GroupState:
    """Reassign only when the step hits the group-assignment interval."""
    if step % interval != 0:
        return prev
    return assign_groups(fm, att, obs, act_onehot, alive, k, rng, prev=prev, step=step)
