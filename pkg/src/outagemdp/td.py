"""
Temporal-difference updates on probability vectors.

The stored vector moves toward a target vector by ``learning_rate`` times the
negative gradient of a loss between the two, projected back onto the simplex
(clamp at zero, renormalize).  With the model available the target is the
binned vector of the successors; :func:`mixture_experiment` instead draws
one successor's vector per step as a noisy label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .distributional import (
    DEFAULT_TOL,
    INPLACE,
    BinningRule,
    GainGrid,
    StateDistribution,
    build_binning_rule,
    initial_probs,
)
from .mdp_core import MdpModel, Policy

SQUARED = "squared-difference"
KL = "kl-divergence"
LOSSES = (SQUARED, KL)

_FLOOR = 1e-12


@dataclass(frozen=True)
class TdConfig:
    learning_rate: float = 0.01
    loss: str = SQUARED
    steps: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")


def error_signal(probs: np.ndarray, target: np.ndarray, loss: str = SQUARED) -> np.ndarray:
    """Negative loss gradient w.r.t. ``probs``, restricted to zero-sum directions.

    Squared difference (taken as half the squared norm) gives
    ``target - probs``.  For KL(target || probs) the raw gradient
    ``target / probs`` is centered so the step keeps the total mass.
    """
    if loss == SQUARED:
        return target - probs
    if loss == KL:
        g = target / np.maximum(probs, _FLOOR)
        return g - g.mean()
    raise ValueError(f"unknown loss {loss!r}")


def _td_update(probs: np.ndarray, target: np.ndarray, lr: float, loss: str) -> np.ndarray:
    if loss == SQUARED:
        # same update as probs + lr * (target - probs), exact at lr == 1
        new = (1.0 - lr) * probs + lr * target
    else:
        new = probs + lr * error_signal(probs, target, loss)
    if np.any(new < 0):
        new = np.maximum(new, 0.0)
        return new / new.sum()
    total = new.sum()
    if abs(total - 1.0) > 1e-12:
        new = new / total
    return new


def td_step(dist: StateDistribution, target: StateDistribution, cfg: TdConfig) -> StateDistribution:
    if dist.grid != target.grid:
        raise ValueError("distributions live on different grids")
    probs = _td_update(dist.probs, target.probs, cfg.learning_rate, cfg.loss)
    return StateDistribution(dist.grid, probs)


def td_sweep(rule: BinningRule, policy_idx: np.ndarray, probs: np.ndarray, cfg: TdConfig, sweep: str = INPLACE) -> np.ndarray:
    """TD update of every state toward its model-based binned target."""
    src = probs if sweep == INPLACE else probs.copy()
    out = probs if sweep == INPLACE else np.empty_like(probs)
    for s, a in enumerate(policy_idx):
        target = rule.propagate(src, s, int(a))
        out[s] = _td_update(src[s], target, cfg.learning_rate, cfg.loss)
    return out


@dataclass
class TdResult:
    probs: np.ndarray
    converged: bool
    sweeps: int


def td_evaluate(
    model: MdpModel,
    policy: Policy,
    grids: Mapping[str, GainGrid],
    cfg: TdConfig,
    init="point-mass",
    tol: float = DEFAULT_TOL,
    sweep: str = INPLACE,
) -> TdResult:
    """Repeat model-based TD sweeps (at most ``cfg.steps``) until they stop moving."""
    rule = build_binning_rule(model, grids, policy)
    idx = policy.indices(model)
    probs = initial_probs(model, grids, init, policy)
    for n in range(1, cfg.steps + 1):
        prev = probs.copy()
        probs = td_sweep(rule, idx, probs, cfg, sweep)
        if np.max(np.abs(probs - prev)) <= tol:
            return TdResult(probs, True, n)
    return TdResult(probs, False, cfg.steps)


# -- sampled-label experiment ------------------------------------------------

def discrete_gaussian(grid: GainGrid, mean: float, std: float) -> StateDistribution:
    z = (grid.centers - mean) / std
    w = np.exp(-0.5 * z * z)
    return StateDistribution(grid, w / w.sum())


def mixture_grid(mean1: float, mean2: float, k_bins: int, margin: float = 4.0) -> GainGrid:
    lo, hi = min(mean1, mean2) - margin, max(mean1, mean2) + margin
    return GainGrid(np.linspace(lo, hi, k_bins))


@dataclass
class MixtureResult:
    learned: StateDistribution
    target: StateDistribution
    l1_error: float
    trace: list[tuple[int, float]]


def mixture_experiment(
    p: float,
    mean1: float,
    mean2: float,
    k_bins: int,
    cfg: TdConfig,
    mode: str = "sampled",
    std_bins: float = 4.0,
    average_from: float = 0.5,
    trace_every: int = 100,
) -> MixtureResult:
    """Learn a free probability vector from labels drawn as P1 (prob p) or P2.

    The target is the mixture ``p * P1 + (1 - p) * P2`` of two discretized
    Gaussians (std ``std_bins`` bin widths) on a shared grid.  With a constant
    step size the iterate keeps jittering around the target, so the
    returned estimate is the running average of iterates after the first
    ``average_from`` fraction of the steps (``average_from=1`` returns the
    last iterate).  ``mode="model"`` skips sampling and takes one step
    straight toward the mixture.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if int(k_bins) != k_bins or k_bins < 2:
        raise ValueError("k_bins must be an integer >= 2")
    if not 0.0 <= average_from <= 1.0:
        raise ValueError("average_from must lie in [0, 1]")
    grid = mixture_grid(mean1, mean2, int(k_bins))
    std = std_bins * grid.width
    p1 = discrete_gaussian(grid, mean1, std).probs
    p2 = discrete_gaussian(grid, mean2, std).probs
    target = p * p1 + (1.0 - p) * p2
    probs = np.full(grid.centers.size, 1.0 / grid.centers.size)

    def l1(x):
        return float(np.abs(x - target).sum())

    trace = [(0, l1(probs))]
    if mode == "model":
        probs = _td_update(probs, target, cfg.learning_rate, cfg.loss)
        trace.append((1, l1(probs)))
        return MixtureResult(StateDistribution(grid, probs), StateDistribution(grid, target), l1(probs), trace)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")

    rng = np.random.default_rng(cfg.seed)
    first = rng.random(cfg.steps) < p
    start = min(int(average_from * cfg.steps), cfg.steps - 1)
    avg = np.zeros_like(probs)
    n_avg = 0
    estimate = probs
    for step in range(1, cfg.steps + 1):
        label = p1 if first[step - 1] else p2
        probs = _td_update(probs, label, cfg.learning_rate, cfg.loss)
        if step > start:
            n_avg += 1
            avg += (probs - avg) / n_avg
            estimate = avg
        else:
            estimate = probs
        if step % trace_every == 0 or step == cfg.steps:
            trace.append((step, l1(estimate)))
    learned = estimate / estimate.sum()
    return MixtureResult(StateDistribution(grid, learned), StateDistribution(grid, target), l1(learned), trace)
