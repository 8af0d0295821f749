import itertools

import numpy as np
import pytest

from outagemdp.expected_gain import (
    first_argmax,
    greedy_policy,
    policy_evaluation_exact,
    q_values,
    value_iteration,
)
from outagemdp.mdp_core import MdpModel, Policy, Transition, random_mdp

from .conftest import single_state


def truncated_dp(model, horizon):
    """Finite-horizon backward DP over the raw transition records."""
    v = {s: 0.0 for s in model.states}
    for _ in range(horizon):
        q = {}
        for t in model.transitions:
            key = (t.source, t.action)
            q[key] = q.get(key, 0.0) + t.prob * (t.reward + model.discount * v[t.target])
        v = {s: max(q[(s, a)] for a in model.allowed[s]) for s in model.states}
    return v


def iterative_evaluation(model, policy, sweeps=5000):
    v = {s: 0.0 for s in model.states}
    for _ in range(sweeps):
        new = {s: 0.0 for s in model.states}
        for t in model.transitions:
            if policy[t.source] == t.action:
                new[t.source] += t.prob * (t.reward + model.discount * v[t.target])
        v = new
    return v


def test_robot_values_and_policy(robot):
    vt = value_iteration(robot)
    assert vt.converged
    assert vt["low"] == pytest.approx(3.18, abs=0.01)
    assert greedy_policy(robot, vt).action_of == {"low": "search", "high": "search"}


def test_geometric_series():
    vt = value_iteration(single_state(0.4, 0.8))
    assert vt["s"] == pytest.approx(2.0, abs=1e-8)


def test_matches_truncated_dp():
    m = random_mdp(4, 2, 0.9, 1)
    vt = value_iteration(m)
    ref = truncated_dp(m, 200)
    bound = 0.9 ** 200 * m.max_abs_reward / (1 - 0.9)
    for s in m.states:
        assert abs(vt[s] - ref[s]) <= bound + 1e-8


def test_contraction_per_sweep():
    m = random_mdp(4, 3, 0.9, 11)
    d = value_iteration(m).deltas
    for prev, cur in zip(d, d[1:]):
        assert cur <= 0.9 * prev + 1e-12


def test_non_convergence_flag(robot):
    vt = value_iteration(robot, max_iter=1)
    assert not vt.converged and vt.iterations == 1


def test_q_values_search_beats_wait_at_high(robot):
    q = q_values(robot, value_iteration(robot), "high")
    assert q["search"] > q["wait"]
    assert set(q) == {"search", "wait", "recharge"}


def test_q_values_zero_discount(robot):
    from dataclasses import replace

    m = replace(robot, discount=0.0)
    q = q_values(m, value_iteration(m), "low")
    assert q["search"] == pytest.approx(0.8 * 0.9 - 0.2)
    assert q["wait"] == pytest.approx(0.4)
    assert q["recharge"] == 0.0


def test_q_values_direct_sum():
    m = random_mdp(3, 2, 0.7, 5)
    vt = value_iteration(m)
    for s in m.states:
        q = q_values(m, vt, s)
        for a in m.allowed[s]:
            ref = sum(t.prob * (t.reward + 0.7 * vt[t.target]) for t in m.transitions if (t.source, t.action) == (s, a))
            assert q[a] == pytest.approx(ref, abs=1e-12)


def test_q_values_unknown_state(robot):
    with pytest.raises(ValueError):
        q_values(robot, value_iteration(robot), "medium")


def test_tie_break_first_declared():
    t = Transition
    m = MdpModel(
        ("s",),
        ("b", "a"),
        {"s": ("b", "a")},
        (t("s", "b", "s", 1.0, 1.0), t("s", "a", "s", 1.0, 1.0)),
        0.5,
    )
    assert greedy_policy(m, value_iteration(m))["s"] == "b"


def test_first_argmax_ignores_rounding_noise():
    assert first_argmax(np.array([[0.9999999999999999, 1.0, 0.5]]))[0] == 0
    assert first_argmax(np.array([[0.99, 1.0]]))[0] == 1


def test_greedy_matches_policy_enumeration():
    m = random_mdp(3, 3, 0.8, 2)
    best = None
    for combo in itertools.product(m.actions, repeat=3):
        pol = Policy(dict(zip(m.states, combo)))
        v = iterative_evaluation(m, pol, sweeps=400)
        if best is None or all(v[s] >= best[1][s] - 1e-9 for s in m.states):
            best = (pol, v)
    got = greedy_policy(m, value_iteration(m))
    assert got == best[0]


def test_exact_evaluation_alternative(robot, alt_policy):
    assert policy_evaluation_exact(robot, alt_policy)["low"] == pytest.approx(2.0, abs=1e-6)


def test_exact_evaluation_wait_everywhere(robot):
    vt = policy_evaluation_exact(robot, Policy({"low": "wait", "high": "wait"}))
    np.testing.assert_allclose(vt.values, [2.0, 2.0], atol=1e-12)


def test_exact_matches_iterative():
    m = random_mdp(4, 2, 0.9, 3)
    rng = np.random.default_rng(0)
    pol = Policy({s: m.actions[rng.integers(2)] for s in m.states})
    exact = policy_evaluation_exact(m, pol)
    ref = iterative_evaluation(m, pol)
    for s in m.states:
        assert exact[s] == pytest.approx(ref[s], abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_greedy_of_vi_close_to_vi(seed):
    m = random_mdp(4, 3, 0.85, seed)
    vt = value_iteration(m, tol=1e-9)
    ev = policy_evaluation_exact(m, greedy_policy(m, vt))
    assert np.max(np.abs(ev.values - vt.values)) <= 1e-9 / (1 - 0.85) + 1e-9
    assert np.all(np.abs(vt.values) <= m.max_abs_reward / (1 - 0.85) + 1e-12)
