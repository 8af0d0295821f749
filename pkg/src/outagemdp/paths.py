"""
Exhaustive path enumeration under a fixed policy, truncated at a horizon.

This is the reference the binned distributions are checked against; it works
from the transition records only and never touches bins.
"""
from __future__ import annotations

import numpy as np

from .mdp_core import MdpModel, Policy


def _branches(model: MdpModel, policy: Policy) -> dict[str, list[tuple[str, float, float]]]:
    out: dict[str, list] = {s: [] for s in model.states}
    for t in model.transitions:
        if t.prob > 0 and policy[t.source] == t.action:
            out[t.source].append((t.target, t.prob, t.reward))
    return out


def enumerate_paths(model: MdpModel, policy: Policy, start: str, horizon: int):
    """All paths of ``horizon`` steps from ``start``.

    Returns arrays ``(end_state_index, gain, prob)`` with one entry per
    path; ``gain`` is the discounted reward sum over the horizon.
    """
    branches = _branches(model, policy)
    idx = model.state_index
    states = np.array([idx[start]])
    gains = np.zeros(1)
    probs = np.ones(1)
    scale = 1.0
    for _ in range(horizon):
        ns, ng, np_ = [], [], []
        for i, s in enumerate(model.states):
            sel = states == i
            if not sel.any():
                continue
            for target, p, r in branches[s]:
                ns.append(np.full(sel.sum(), idx[target]))
                ng.append(gains[sel] + scale * r)
                np_.append(probs[sel] * p)
        states, gains, probs = np.concatenate(ns), np.concatenate(ng), np.concatenate(np_)
        scale *= model.discount
    return states, gains, probs


def truncation_bound(model: MdpModel, horizon: int) -> float:
    """Largest possible gap between the full gain and its horizon truncation."""
    return model.discount ** horizon * model.max_abs_reward / (1.0 - model.discount)


def oracle_ccdf(model: MdpModel, policy: Policy, start: str, horizon: int, xs) -> np.ndarray:
    """p(G_H > x) for the horizon-truncated gain G_H, summed over every path.

    The paths are split into a prefix of ``horizon // 2`` steps and a suffix
    of the remainder, so only ``n**(H/2)`` paths are ever held at once; each
    full path still contributes exactly its own probability.
    """
    xs = np.asarray(xs, dtype=float)
    lam = model.discount
    h1 = horizon // 2
    h2 = horizon - h1
    pre_state, pre_gain, pre_prob = enumerate_paths(model, policy, start, h1)
    scale = lam ** h1
    out = np.zeros_like(xs)
    if scale == 0.0 or h2 == 0:
        for g, p in zip(pre_gain, pre_prob):
            out += p * (g > xs)
        return out
    for i, s in enumerate(model.states):
        sel = pre_state == i
        if not sel.any():
            continue
        _, sg, sp = enumerate_paths(model, policy, s, h2)
        order = np.argsort(sg, kind="stable")
        sg, sp = sg[order], sp[order]
        tail = np.concatenate((np.cumsum(sp[::-1])[::-1], [0.0]))
        # suffix gain must exceed (x - prefix gain) / discount**h1
        thresh = (xs[None, :] - pre_gain[sel][:, None]) / scale
        out += (pre_prob[sel][:, None] * tail[np.searchsorted(sg, thresh, side="right")]).sum(axis=0)
    return out
