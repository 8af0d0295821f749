"""
Per-state gain distributions on fixed reference grids.

Each state carries a probability vector over K gain bins.  One sweep pushes
the successors' vectors through ``gain = r(s, s') + discount * center`` and
re-bins the result on the state's own grid; the map from (successor, bin) to
target bin is precomputed once as a :class:`BinningRule`.  Iterating the
sweep under a fixed policy gives the gain distribution of that policy
(:func:`evaluate_policy_distribution`); choosing per state the action whose
binned vector maximizes ``p(G > alpha)`` gives :func:`solve_outage`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .expected_gain import ValueTable, first_argmax, policy_evaluation_exact, value_iteration
from .mdp_core import MdpFileError, MdpModel, Policy

DEFAULT_BINS = 256
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
NORMALIZATION_TOL = 1e-9

GLOBAL = "global"
CENTERED = "centered"
INPLACE = "inplace"
SNAPSHOT = "snapshot"

Init = Union[str, Mapping[str, float], ValueTable]


class GainGrid:
    """Bin centers; bin edges sit at midpoints, the outer bins are unbounded."""

    def __init__(self, centers):
        c = np.array(centers, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("a gain grid needs at least 2 centers")
        if not np.all(np.isfinite(c)) or np.any(np.diff(c) <= 0):
            raise ValueError("grid centers must be finite and strictly increasing")
        c.setflags(write=False)
        self.centers = c

    def __len__(self):
        return self.centers.size

    def __eq__(self, other):
        return isinstance(other, GainGrid) and np.array_equal(self.centers, other.centers)

    def __repr__(self):
        return f"GainGrid(K={len(self)}, [{self.centers[0]:g}, {self.centers[-1]:g}])"

    @property
    def edges(self) -> np.ndarray:
        """All K+1 edges, starting at -inf and ending at +inf."""
        mid = 0.5 * (self.centers[1:] + self.centers[:-1])
        return np.concatenate(([-np.inf], mid, [np.inf]))

    @property
    def width(self) -> float:
        """Largest spacing between consecutive centers."""
        return float(np.max(np.diff(self.centers)))

    def bin_of(self, gains):
        """Bin index of each gain; a gain on an edge goes to the upper bin."""
        mid = 0.5 * (self.centers[1:] + self.centers[:-1])
        return np.searchsorted(mid, gains, side="right")


@dataclass
class StateDistribution:
    grid: GainGrid
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (len(self.grid),):
            raise ValueError("probability vector and grid differ in length")

    def check(self, tol: float = NORMALIZATION_TOL) -> None:
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > tol:
            raise ValueError("not a probability vector")

    def mean(self) -> float:
        return float(self.probs @ self.grid.centers)


# -- grids -------------------------------------------------------------------

def gain_span(model: MdpModel) -> tuple[float, float]:
    lo, hi = model.reward_bounds
    scale = 1.0 / (1.0 - model.discount)
    lo, hi = lo * scale, hi * scale
    if hi - lo < 1e-12:
        # constant reward: any non-degenerate span around the single gain works
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def make_grid(
    model: MdpModel,
    k_bins: int = DEFAULT_BINS,
    mode: str = GLOBAL,
    values: ValueTable | None = None,
) -> dict[str, GainGrid]:
    """Uniform reference grids spanning [r_min, r_max] / (1 - discount).

    ``global`` shares one grid between all states.  ``centered`` uses a grid
    of the same span per state, shifted so the middle center (index
    ceil(K/2), 1-based) equals ``values[s]``; the expected-gain values of
    the model are used when ``values`` is omitted.
    """
    if int(k_bins) != k_bins or k_bins < 2:
        raise ValueError("k_bins must be an integer >= 2")
    lo, hi = gain_span(model)
    base = np.linspace(lo, hi, int(k_bins))
    if mode == GLOBAL:
        grid = GainGrid(base)
        return {s: grid for s in model.states}
    if mode != CENTERED:
        raise ValueError(f"unknown grid mode {mode!r}")
    if values is None:
        values = value_iteration(model)
    step = (hi - lo) / (k_bins - 1)
    mid = math.ceil(k_bins / 2) - 1
    offsets = (np.arange(k_bins) - mid) * step
    return {s: GainGrid(values[s] + offsets) for s in model.states}


def _check_grids(model: MdpModel, grids: Mapping[str, GainGrid]) -> int:
    missing = [s for s in model.states if s not in grids]
    if missing:
        raise ValueError(f"no grid for state(s) {missing}")
    sizes = {len(grids[s]) for s in model.states}
    if len(sizes) != 1:
        raise ValueError("all grids must have the same number of bins")
    return sizes.pop()


# -- binning rule ------------------------------------------------------------

@dataclass
class RuleEntry:
    """Flattened (successor, source bin) -> target bin map for one (s, a)."""

    successor: np.ndarray  # successor state index
    source_bin: np.ndarray
    target_bin: np.ndarray
    factor: np.ndarray  # p(s'|s, a)
    n_bins: int

    @property
    def flat_source(self) -> np.ndarray:
        return self.successor * self.n_bins + self.source_bin

    def apply(self, probs: np.ndarray) -> np.ndarray:
        """Binned vector from the ``[state, bin]`` matrix of current vectors."""
        w = self.factor * probs.ravel()[self._src]
        return np.bincount(self.target_bin, weights=w, minlength=self.n_bins)

    def __post_init__(self):
        self._src = self.flat_source


@dataclass
class BinningRule:
    model: MdpModel
    grids: dict[str, GainGrid]
    entries: dict[tuple[int, int], RuleEntry] = field(default_factory=dict)

    @property
    def n_bins(self) -> int:
        return len(self.grids[self.model.states[0]])

    def entry(self, state: str, action: str) -> RuleEntry:
        return self.entries[(self.model.state_index[state], self.model.action_index[action])]

    def propagate(self, probs: np.ndarray, s: int, a: int) -> np.ndarray:
        return self.entries[(s, a)].apply(probs)


def build_binning_rule(
    model: MdpModel, grids: Mapping[str, GainGrid], policy: Policy | None = None
) -> BinningRule:
    """Materialize the bin map for the policy's actions, or every allowed action.

    Gains beyond the outermost centers fall into the first or last bin.
    """
    k = _check_grids(model, grids)
    lam = model.discount
    rule = BinningRule(model, dict(grids))
    for s in model.states:
        acts = model.allowed[s] if policy is None else (policy[s],)
        own = grids[s]
        for a in acts:
            succ, src, dst, fac = [], [], [], []
            for j, p, r in model.successors(s, a):
                centers = grids[model.states[j]].centers
                succ.append(np.full(k, j))
                src.append(np.arange(k))
                dst.append(own.bin_of(r + lam * centers))
                fac.append(np.full(k, p))
            rule.entries[(model.state_index[s], model.action_index[a])] = RuleEntry(
                np.concatenate(succ), np.concatenate(src), np.concatenate(dst), np.concatenate(fac), k
            )
    return rule


# -- initialization ----------------------------------------------------------

def initial_probs(
    model: MdpModel,
    grids: Mapping[str, GainGrid],
    init: Init,
    policy: Policy | None = None,
) -> np.ndarray:
    """``[state, bin]`` starting matrix.

    ``"uniform"`` spreads mass evenly.  ``"point-mass"`` puts all mass in the
    bin holding the expected gain: of ``policy`` when one is given, of the
    expected-gain-optimal policy otherwise.  A mapping (or ValueTable) gives
    the point-mass locations explicitly.
    """
    k = _check_grids(model, grids)
    out = np.zeros((model.n_states, k))
    if isinstance(init, str):
        if init == "uniform":
            out[:] = 1.0 / k
            return out
        if init != "point-mass":
            raise ValueError(f"unknown init {init!r}")
        init = policy_evaluation_exact(model, policy) if policy is not None else value_iteration(model)
    if isinstance(init, ValueTable):
        init = init.value_of
    for i, s in enumerate(model.states):
        out[i, grids[s].bin_of(float(init[s]))] = 1.0
    return out


def _check_normalized(probs: np.ndarray) -> None:
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > NORMALIZATION_TOL) or np.any(probs < 0):
        raise RuntimeError(f"distribution lost normalization (row sums {sums})")


def _to_dists(model, grids, probs) -> dict[str, StateDistribution]:
    return {s: StateDistribution(grids[s], probs[i].copy()) for i, s in enumerate(model.states)}


# -- fixed-policy evaluation -------------------------------------------------

@dataclass
class DistributionResult:
    dists: dict[str, StateDistribution]
    converged: bool
    iterations: int
    deltas: list[float]

    def __getitem__(self, state: str) -> StateDistribution:
        return self.dists[state]


def policy_sweep(
    rule: BinningRule, policy_idx: np.ndarray, probs: np.ndarray, sweep: str = INPLACE
) -> np.ndarray:
    """One propagate-and-bin pass over all states, in declared order."""
    src = probs if sweep == INPLACE else probs.copy()
    out = probs if sweep == INPLACE else np.empty_like(probs)
    for s, a in enumerate(policy_idx):
        out[s] = rule.propagate(src, s, int(a))
    return out


def evaluate_policy_distribution(
    model: MdpModel,
    policy: Policy,
    grids: Mapping[str, GainGrid],
    init: Init = "point-mass",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    sweep: str = INPLACE,
) -> DistributionResult:
    """Gain distribution of every state under a fixed policy.

    Sweeps until the largest change of any probability is <= ``tol``.
    """
    if sweep not in (INPLACE, SNAPSHOT):
        raise ValueError(f"unknown sweep mode {sweep!r}")
    policy.check(model)
    rule = build_binning_rule(model, grids, policy)
    idx = policy.indices(model)
    probs = initial_probs(model, grids, init, policy)
    deltas = []
    converged = False
    n = 0
    for n in range(1, max_iter + 1):
        prev = probs.copy()
        probs = policy_sweep(rule, idx, probs, sweep)
        _check_normalized(probs)
        delta = float(np.max(np.abs(probs - prev)))
        deltas.append(delta)
        if delta <= tol:
            converged = True
            break
    return DistributionResult(_to_dists(model, grids, probs), converged, n, deltas)


# -- outage values and curves ------------------------------------------------

def _tail_mass(dist: StateDistribution, xs: np.ndarray) -> np.ndarray:
    # suffix sums of nonnegative terms are monotone in floating point too
    suffix = np.concatenate((np.cumsum(dist.probs[::-1])[::-1], [0.0]))
    return suffix[np.searchsorted(dist.grid.centers, xs, side="right")]


def outage_value(dist: StateDistribution, alpha: float) -> float:
    """p(G > alpha): mass of the bins whose center is strictly above alpha."""
    return float(_tail_mass(dist, np.array([alpha], dtype=float))[0])


def ccdf_from_distribution(dist: StateDistribution, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if np.any(np.diff(xs) < 0):
        raise ValueError("xs must be sorted ascending")
    return _tail_mass(dist, xs)


# -- outage-optimal policy ---------------------------------------------------

CONVERGED = "converged"
MAX_ITER = "max_iter"
OSCILLATING = "oscillating"


@dataclass
class OutageSolution:
    dists: dict[str, StateDistribution]
    policy: Policy
    q: dict[tuple[str, str], float]
    status: str
    iterations: int
    alpha: float
    deltas: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def value(self, state: str) -> float:
        return self.q[(state, self.policy[state])]


def solve_outage(
    model: MdpModel,
    grids: Mapping[str, GainGrid],
    alpha: float,
    init: Init = "point-mass",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    sweep: str = INPLACE,
) -> OutageSolution:
    """Search a policy maximizing p(G > alpha) in every state.

    Per state, every allowed action's binned vector is scored by its mass
    above ``alpha`` on the state's own grid; the best one (lowest declared
    index on ties) becomes the state's vector.  With ``sweep="inplace"``
    later states in a sweep already see the updated earlier ones.

    Stops when the vectors change by at most ``tol``, after ``max_iter``
    sweeps, or when the iterates settle into a period-2 cycle with
    alternating policies (``status == "oscillating"``).
    """
    if sweep not in (INPLACE, SNAPSHOT):
        raise ValueError(f"unknown sweep mode {sweep!r}")
    rule = build_binning_rule(model, grids)
    probs = initial_probs(model, grids, init)
    n_s, n_a = model.n_states, model.n_actions
    above = [grids[s].centers > alpha for s in model.states]

    q = np.full((n_s, n_a), -np.inf)
    history: list[tuple[np.ndarray, np.ndarray]] = []
    deltas = []
    status = MAX_ITER
    n = 0
    for n in range(1, max_iter + 1):
        prev = probs.copy()
        src = probs if sweep == INPLACE else prev
        new = probs if sweep == INPLACE else np.empty_like(probs)
        choice = np.zeros(n_s, dtype=int)
        for s in range(n_s):
            cand = {}
            for a in np.flatnonzero(model.allowed_mask[s]):
                cand[a] = rule.propagate(src, s, int(a))
                q[s, a] = cand[a][above[s]].sum()
            choice[s] = first_argmax(q[s])
            new[s] = cand[choice[s]]
        probs = new
        _check_normalized(probs)
        delta = float(np.max(np.abs(probs - prev)))
        deltas.append(delta)
        history.append((choice, probs.copy()))
        if delta <= tol:
            status = CONVERGED
            break
        if len(history) >= 3:
            (c2, p2), (c1, _), (c0, _) = history[-3:]
            if not np.array_equal(c0, c1) and np.array_equal(c0, c2) and np.max(np.abs(probs - p2)) <= tol:
                status = OSCILLATING
                break
        history = history[-3:]

    policy = Policy.from_indices(model, choice)
    qmap = {
        (s, a): float(q[i, model.action_index[a]])
        for i, s in enumerate(model.states)
        for a in model.allowed[s]
    }
    return OutageSolution(_to_dists(model, grids, probs), policy, qmap, status, n, float(alpha), deltas)


# -- persistence -------------------------------------------------------------

def save_distributions(dists: Mapping[str, StateDistribution], path) -> None:
    data = {s: {"centers": d.grid.centers.tolist(), "probs": d.probs.tolist()} for s, d in dists.items()}
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def load_distributions(path) -> dict[str, StateDistribution]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MdpFileError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise MdpFileError(f"{path}: expected an object keyed by state")
    out = {}
    for s, rec in data.items():
        if not isinstance(rec, dict) or set(rec) != {"centers", "probs"}:
            raise MdpFileError(f"{path}: state {s!r} needs exactly 'centers' and 'probs'")
        if len(rec["centers"]) != len(rec["probs"]):
            raise MdpFileError(f"{path}: state {s!r}: centers and probs differ in length")
        try:
            out[s] = StateDistribution(GainGrid(rec["centers"]), rec["probs"])
        except (TypeError, ValueError) as exc:
            raise MdpFileError(f"{path}: state {s!r}: {exc}") from None
    return out
