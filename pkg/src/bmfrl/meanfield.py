"""Intra-group and inter-group mean-action aggregation.

Actions are aggregated as vectors (one-hot rows for discrete actions, raw
vectors for continuous ones). Degenerate cases — singleton groups, a single
group, dead agents — produce a zero vector plus a flag bit of 1.0 so the
critic can tell "no neighbors" apart from "neighbors averaged to zero".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MeanFieldActions:
    """Per-agent intra/inter mean actions with degeneracy flags (0 or 1)."""

    intra: np.ndarray         # (n, da)
    inter: np.ndarray         # (n, da)
    intra_flag: np.ndarray    # (n,)
    inter_flag: np.ndarray    # (n,)

    @classmethod
    def zeros(cls, n: int, da: int) -> "MeanFieldActions":
        """Step-0 cache: no previous joint action, everything degenerate."""
        return cls(np.zeros((n, da)), np.zeros((n, da)), np.ones(n), np.ones(n))

    def rows(self) -> np.ndarray:
        """Concatenated critic-input block: [intra, inter, flags]."""
        return np.concatenate(
            [self.intra, self.inter, self.intra_flag[:, None], self.inter_flag[:, None]], axis=1)


def one_hot(actions: np.ndarray, n_actions: int, alive=None) -> np.ndarray:
    """One-hot rows; dead agents (or sentinel -1 actions) get zero rows."""
    actions = np.asarray(actions)
    n = actions.shape[0]
    out = np.zeros((n, n_actions))
    valid = (actions >= 0) & (actions < n_actions)
    if alive is not None:
        valid &= np.asarray(alive, dtype=bool)
    idx = np.flatnonzero(valid)
    out[idx, actions[idx]] = 1.0
    return out


def group_sums(repr_rows: np.ndarray, labels: np.ndarray, k: int, alive: np.ndarray):
    """Per-group action sums and member counts over alive agents."""
    da = repr_rows.shape[1]
    sums = np.zeros((k, da))
    counts = np.zeros(k, dtype=np.int64)
    idx = np.flatnonzero(np.asarray(alive, dtype=bool))
    np.add.at(sums, labels[idx], repr_rows[idx])
    np.add.at(counts, labels[idx], 1)
    return sums, counts


def group_mean_actions(repr_rows, labels, k, alive):
    """Arithmetic mean of each group's member action reprs.

    Returns (means (k, da), empty (k,) bool); empty groups get a zero mean.
    """
    sums, counts = group_sums(repr_rows, labels, k, alive)
    empty = counts == 0
    means = np.zeros_like(sums)
    nz = ~empty
    means[nz] = sums[nz] / counts[nz, None]
    return means, empty


def intra_mean_actions(repr_rows, labels, k, alive):
    """Leave-one-out mean over same-group alive peers, per agent.

    Singleton groups (no peers) and dead agents get a zero row + flag 1.
    """
    n = repr_rows.shape[0]
    alive = np.asarray(alive, dtype=bool)
    sums, counts = group_sums(repr_rows, labels, k, alive)
    out = np.zeros_like(repr_rows)
    flags = np.ones(n)
    peer_counts = np.where(alive, counts[labels] - 1, 0)
    ok = alive & (peer_counts > 0)
    idx = np.flatnonzero(ok)
    out[idx] = (sums[labels[idx]] - repr_rows[idx]) / peer_counts[idx, None]
    flags[idx] = 0.0
    return out, flags


def plain_mf_actions(repr_rows, alive):
    """Classic mean field: mean over all other alive agents (single group)."""
    n = repr_rows.shape[0]
    return intra_mean_actions(repr_rows, np.zeros(n, dtype=np.int64), 1, alive)


def inter_group_means(group_means, group_empty, weights):
    """Attention-weighted mean of the *other* groups' means, per group.

    weights is a (k, k) nonnegative matrix with zero diagonal. Empty groups are
    excluded from the weighted sum (their means carry no information) and the
    normalizer is restricted to the remaining ones. Returns (means (k, da),
    flags (k,)). Raises if a normalizer is nonpositive while contributors exist.
    """
    k = group_means.shape[0]
    out = np.zeros_like(group_means)
    flags = np.ones(k)
    for m in range(k):
        others = [n for n in range(k) if n != m and not group_empty[n]]
        if not others:
            continue
        w = weights[m, others]
        wm = float(w.sum())
        if wm <= 0.0:
            raise ValueError(f"group {m}: normalizer W_m={wm} <= 0 with {len(others)} contributors")
        out[m] = (w[:, None] * group_means[others]).sum(axis=0) / wm
        flags[m] = 0.0
    return out, flags


def compute_mean_field(repr_rows, labels, k, weights, alive) -> MeanFieldActions:
    """Full bi-level aggregation for one step.

    With k=1 (or labels all zero) this reduces exactly to classic mean field:
    the intra mean runs over all alive peers and the inter block is a flagged
    zero vector.
    """
    n = repr_rows.shape[0]
    alive = np.asarray(alive, dtype=bool)
    intra, intra_flag = intra_mean_actions(repr_rows, labels, k, alive)
    gmeans, gempty = group_mean_actions(repr_rows, labels, k, alive)
    ginter, gflags = inter_group_means(gmeans, gempty, weights)
    inter = np.zeros_like(repr_rows)
    inter_flag = np.ones(n)
    idx = np.flatnonzero(alive)
    inter[idx] = ginter[labels[idx]]
    inter_flag[idx] = gflags[labels[idx]]
    return MeanFieldActions(intra=intra, inter=inter, intra_flag=intra_flag, inter_flag=inter_flag)
