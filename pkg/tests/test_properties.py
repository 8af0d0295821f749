"""Property suites for normalization, monotonicity and the CLI exit-code contract."""
import json

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from outagemdp.cli import main
from outagemdp.distributional import (
    GainGrid,
    StateDistribution,
    ccdf_from_distribution,
    evaluate_policy_distribution,
    make_grid,
    outage_value,
    solve_outage,
)
from outagemdp.mdp_core import Policy, mdp_to_dict, random_mdp, recycling_robot
from outagemdp.rollout import empirical_ccdf
from outagemdp.td import LOSSES, TdConfig, td_step

MANY = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-50, 50, allow_nan=False)


@st.composite
def distributions(draw, k_max=40):
    k = draw(st.integers(2, k_max))
    start = draw(finite)
    steps = draw(st.lists(st.floats(1e-3, 5), min_size=k - 1, max_size=k - 1))
    centers = start + np.concatenate(([0.0], np.cumsum(steps)))
    w = np.array(draw(st.lists(st.floats(0, 1), min_size=k, max_size=k)))
    w[draw(st.integers(0, k - 1))] += 1e-3
    return StateDistribution(GainGrid(centers), w / w.sum())


@st.composite
def small_problem(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 3))
    lam = draw(st.floats(0.0, 0.95))
    model = random_mdp(n, m, lam, draw(st.integers(0, 10**6)))
    policy = Policy({s: model.actions[draw(st.integers(0, m - 1))] for s in model.states})
    return model, policy, draw(st.integers(2, 24))


@MANY
@given(small_problem(), st.sampled_from(["uniform", "point-mass"]), st.sampled_from(["inplace", "snapshot"]))
def test_algorithm1_keeps_normalization(problem, init, sweep):
    model, policy, k = problem
    res = evaluate_policy_distribution(model, policy, make_grid(model, k), init=init, sweep=sweep, max_iter=15)
    for d in res.dists.values():
        assert np.all(d.probs >= 0)
        assert abs(d.probs.sum() - 1) <= 1e-9


@MANY
@given(small_problem(), finite, st.sampled_from(["inplace", "snapshot"]))
def test_algorithm2_keeps_normalization_and_argmax(problem, alpha, sweep):
    model, _, k = problem
    sol = solve_outage(model, make_grid(model, k), alpha / 10, sweep=sweep, max_iter=10)
    for d in sol.dists.values():
        assert np.all(d.probs >= 0) and abs(d.probs.sum() - 1) <= 1e-9
    for s in model.states:
        chosen = sol.q[(s, sol.policy[s])]
        assert all(chosen >= sol.q[(s, a)] - 1e-12 for a in model.allowed[s])
        assert 0 <= chosen <= 1 + 1e-12


@MANY
@given(distributions(), st.lists(finite, min_size=1, max_size=30))
def test_ccdf_nonincreasing(dist, xs):
    xs = np.sort(xs)
    ys = ccdf_from_distribution(dist, xs)
    assert np.all(np.diff(ys) <= 0)
    assert np.all((ys >= 0) & (ys <= 1 + 1e-12))
    for x, y in zip(xs[:5], ys[:5]):
        assert y == outage_value(dist, x)


@MANY
@given(st.lists(finite, min_size=1, max_size=50), st.lists(finite, min_size=1, max_size=30))
def test_empirical_ccdf_nonincreasing(gains, xs):
    ys = empirical_ccdf(gains, np.sort(xs))
    assert np.all(np.diff(ys) <= 0)
    assert np.all((ys >= 0) & (ys <= 1))


@MANY
@given(distributions(k_max=20), st.data(), st.floats(1e-9, 1.0), st.sampled_from(LOSSES))
def test_td_step_stays_on_simplex(dist, data, lr, loss):
    k = len(dist.grid)
    w = np.array(data.draw(st.lists(st.floats(0, 1), min_size=k, max_size=k))) + 1e-6
    target = StateDistribution(dist.grid, w / w.sum())
    out = td_step(dist, target, TdConfig(lr, loss, 1))
    assert np.all(out.probs >= 0)
    assert abs(out.probs.sum() - 1) <= 1e-9


_ROBOT = mdp_to_dict(recycling_robot())


@st.composite
def cli_case(draw):
    """(argv, expected exit code) pairs covering usage, validation and success paths."""
    kind = draw(st.sampled_from(["bins", "lr", "validate", "p", "missing"]))
    if kind == "bins":
        bins = draw(st.integers(-5, 1))
        return ["solve-outage", "builtin:recycling_robot", "--alpha", "1", "--bins", str(bins)], 2
    if kind == "lr":
        lr = draw(st.one_of(st.floats(-5, 0), st.floats(1.0001, 10)))
        return ["td-demo", "--lr", repr(lr), "--steps", "5"], 2
    if kind == "p":
        p = draw(st.one_of(st.floats(-5, -1e-6), st.floats(1.000001, 5)))
        return ["td-demo", "--p", repr(p), "--steps", "5"], 2
    if kind == "missing":
        return ["validate", "/nonexistent/" + draw(st.text("abc", min_size=1, max_size=5)) + ".json"], 2
    data = json.loads(json.dumps(_ROBOT))
    i = draw(st.integers(0, len(data["transitions"]) - 1))
    prob = draw(st.floats(0, 1))
    data["transitions"][i]["prob"] = prob
    data["discount"] = draw(st.floats(0, 1.2))
    ok = abs(prob - _ROBOT["transitions"][i]["prob"]) <= 1e-9 and data["discount"] < 1
    return ["validate", data], 0 if ok else 1


@MANY
@given(cli_case())
def test_exit_code_contract(tmp_path_factory, case):
    argv, expected = case
    if isinstance(argv[1], dict):
        path = tmp_path_factory.mktemp("cli") / "m.json"
        path.write_text(json.dumps(argv[1]))
        argv = [argv[0], str(path)]
    assert main(argv) == expected
