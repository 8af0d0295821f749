"""Expected-gain baseline: value iteration, Q-values, greedy policies, exact evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp_core import MdpModel, Policy

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000


@dataclass
class ValueTable:
    states: tuple[str, ...]
    values: np.ndarray
    converged: bool = True
    iterations: int = 0
    # sup-norm change of every sweep, for contraction checks
    deltas: list[float] = field(default_factory=list)

    @property
    def value_of(self) -> dict[str, float]:
        return {s: float(v) for s, v in zip(self.states, self.values)}

    def __getitem__(self, state: str) -> float:
        return float(self.values[self.states.index(state)])


def _q_matrix(model: MdpModel, v: np.ndarray) -> np.ndarray:
    """Q[s, a] for every pair; disallowed actions are -inf."""
    q = model.expected_reward + model.discount * (model.probs @ v)
    q = q.T.copy()
    q[~model.allowed_mask] = -np.inf
    return q


TIE_TOL = 1e-12


def first_argmax(q: np.ndarray, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest column index.

    Entries within ``tie_tol`` (relative to max(1, |max|)) of the row maximum
    count as ties, so rounding noise between equal values cannot flip the
    choice from one sweep to the next.
    """
    q = np.asarray(q, dtype=float)
    best = q.max(axis=-1, keepdims=True)
    slack = tie_tol * np.maximum(1.0, np.abs(best))
    return np.argmax(q >= best - slack, axis=-1)


def value_iteration(
    model: MdpModel, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> ValueTable:
    """Synchronous Bellman-optimality sweeps until the sup-norm change is <= tol.

    If ``max_iter`` sweeps run out first, the last iterate is returned with
    ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(model.n_states)
    deltas = []
    converged = False
    n = 0
    for n in range(1, max_iter + 1):
        v_new = _q_matrix(model, v).max(axis=1)
        delta = float(np.max(np.abs(v_new - v)))
        deltas.append(delta)
        v = v_new
        if delta <= tol:
            converged = True
            break
    return ValueTable(model.states, v, converged, n, deltas)


def q_values(model: MdpModel, values: ValueTable, s: str) -> dict[str, float]:
    """Q(s, a) = R(s, a) + discount * sum_s' p(s'|s, a) v(s') for a in A_s."""
    if s not in model.state_index:
        raise ValueError(f"unknown state {s!r}")
    i = model.state_index[s]
    q = _q_matrix(model, np.asarray(values.values, dtype=float))[i]
    return {a: float(q[model.action_index[a]]) for a in model.allowed[s]}


def greedy_policy(model: MdpModel, values: ValueTable) -> Policy:
    q = _q_matrix(model, np.asarray(values.values, dtype=float))
    return Policy.from_indices(model, first_argmax(q))


def policy_matrices(model: MdpModel, policy: Policy) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and expected one-step reward under ``policy``."""
    idx = policy.indices(model)
    rows = np.arange(model.n_states)
    return model.probs[idx, rows], model.expected_reward[idx, rows]


def policy_evaluation_exact(model: MdpModel, policy: Policy) -> ValueTable:
    """Solve v = R_pi + discount * P_pi v directly."""
    policy.check(model)
    p, r = policy_matrices(model, policy)
    a = np.eye(model.n_states) - model.discount * p
    v = np.linalg.solve(a, r)
    return ValueTable(model.states, v)
