"""Seeded Monte Carlo rollouts and empirical CCDFs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp_core import MdpModel, Policy

# episodes are simulated in fixed blocks; block b draws from SeedSequence((seed, b))
BLOCK = 4096


@dataclass(frozen=True)
class RolloutConfig:
    episodes: int = 100_000
    truncation_eps: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if int(self.episodes) != self.episodes or self.episodes < 1:
            raise ValueError("episodes must be a positive integer")
        if not self.truncation_eps > 0:
            raise ValueError("truncation_eps must be positive")


def horizon_for(model: MdpModel, eps: float) -> int:
    """Smallest T with discount**T * max|r| / (1 - discount) < eps."""
    lam, rmax = model.discount, model.max_abs_reward
    if rmax == 0 or lam == 0:
        return 1
    bound = rmax / (1 - lam)
    t = max(1, math.ceil(math.log(eps / bound) / math.log(lam)))
    while lam ** t * bound >= eps:
        t += 1
    while t > 1 and lam ** (t - 1) * bound < eps:
        t -= 1
    return t


def simulate_gains(model: MdpModel, policy: Policy, start_state: str, cfg: RolloutConfig, horizon: int | None = None):
    """Discounted gain of ``cfg.episodes`` independent episodes from ``start_state``.

    Each episode is cut after the horizon certified by ``cfg.truncation_eps``
    (or ``horizon`` when given).  The output depends only on the seed.
    """
    policy.check(model)
    T = horizon_for(model, cfg.truncation_eps) if horizon is None else int(horizon)
    idx = policy.indices(model)
    rows = np.arange(model.n_states)
    cum = np.cumsum(model.probs[idx, rows], axis=1)
    cum[:, -1] = np.inf  # guard against row sums a hair below 1
    rew = model.rewards[idx, rows]
    start = model.state_index[start_state]

    gains = np.empty(cfg.episodes)
    for b, lo in enumerate(range(0, cfg.episodes, BLOCK)):
        n = min(BLOCK, cfg.episodes - lo)
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, b)))
        s = np.full(n, start)
        g = np.zeros(n)
        scale = 1.0
        for t in range(T):
            # a full block of draws per step: episode i's stream depends on
            # neither the episode count nor the horizon
            u = rng.random(BLOCK)[:n]
            nxt = (u[:, None] >= cum[s]).sum(axis=1)
            g += scale * rew[s, nxt]
            s = nxt
            scale *= model.discount
        gains[lo:lo + n] = g
    return gains


def empirical_ccdf(gains, xs) -> np.ndarray:
    """Fraction of gains strictly above each x."""
    g = np.sort(np.asarray(gains, dtype=float))
    if g.size == 0:
        raise ValueError("no gains")
    xs = np.asarray(xs, dtype=float)
    if np.any(np.diff(xs) < 0):
        raise ValueError("xs must be sorted ascending")
    return 1.0 - np.searchsorted(g, xs, side="right") / g.size
