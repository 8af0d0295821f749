import numpy as np
import pytest

from outagemdp.distributional import (
    GainGrid,
    StateDistribution,
    build_binning_rule,
    evaluate_policy_distribution,
    initial_probs,
    make_grid,
    policy_sweep,
)
from outagemdp.td import (
    KL,
    SQUARED,
    TdConfig,
    discrete_gaussian,
    error_signal,
    mixture_experiment,
    td_evaluate,
    td_step,
    td_sweep,
)

GRID = GainGrid(np.linspace(-2, 2, 9))


def _dist(seed):
    w = np.random.default_rng(seed).random(9)
    return StateDistribution(GRID, w / w.sum())


def test_full_step_lands_on_target():
    p, t = _dist(0), _dist(1)
    out = td_step(p, t, TdConfig(1.0, SQUARED, 1))
    np.testing.assert_array_equal(out.probs, t.probs)


def test_tiny_step_is_noop():
    p, t = _dist(2), _dist(3)
    out = td_step(p, t, TdConfig(1e-12, SQUARED, 1))
    np.testing.assert_allclose(out.probs, p.probs, atol=1e-9)


def test_grid_mismatch():
    with pytest.raises(ValueError):
        td_step(_dist(0), StateDistribution(GainGrid(np.arange(9.0)), np.full(9, 1 / 9)), TdConfig())


def test_squared_error_signal():
    p, t = _dist(4), _dist(5)
    np.testing.assert_allclose(error_signal(p.probs, t.probs, SQUARED), t.probs - p.probs)


def test_kl_error_signal_is_zero_at_target_and_zero_sum():
    p, t = _dist(6), _dist(7)
    np.testing.assert_allclose(error_signal(t.probs, t.probs, KL), 0, atol=1e-12)
    assert error_signal(p.probs, t.probs, KL).sum() == pytest.approx(0, abs=1e-12)


def test_kl_steps_reduce_distance():
    p, t = _dist(8), _dist(9)
    cfg = TdConfig(0.01, KL, 1)
    start = np.abs(p.probs - t.probs).sum()
    for _ in range(2000):
        p = td_step(p, t, cfg)
    assert np.abs(p.probs - t.probs).sum() < 0.1 * start


@pytest.mark.parametrize("bad", [dict(learning_rate=0), dict(learning_rate=1.5), dict(loss="hinge"), dict(steps=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TdConfig(**bad)


def test_unit_rate_sweep_equals_algorithm_sweep(robot, search_policy):
    grids = make_grid(robot, 128)
    rule = build_binning_rule(robot, grids, search_policy)
    idx = search_policy.indices(robot)
    for sweep in ("inplace", "snapshot"):
        a = initial_probs(robot, grids, "uniform")
        b = a.copy()
        for _ in range(5):
            a = policy_sweep(rule, idx, a, sweep)
            b = td_sweep(rule, idx, b, TdConfig(1.0, SQUARED, 1), sweep)
            np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("policy_name", ["search_policy", "alt_policy"])
def test_iterated_td_reaches_fixed_point(robot, policy_name, request):
    policy = request.getfixturevalue(policy_name)
    grids = make_grid(robot, 256)
    ref = evaluate_policy_distribution(robot, policy, grids, tol=1e-13)
    got = td_evaluate(robot, policy, grids, TdConfig(0.5, SQUARED, 20_000), tol=1e-13)
    assert got.converged
    for i, s in enumerate(robot.states):
        assert np.abs(got.probs[i] - ref[s].probs).sum() < 1e-6


def test_discrete_gaussian():
    g = GainGrid(np.linspace(-4, 4, 81))
    d = discrete_gaussian(g, 1.0, 0.5)
    d.check()
    assert d.mean() == pytest.approx(1.0, abs=1e-6)


def test_mixture_single_label():
    res = mixture_experiment(1.0, -1, 1, 64, TdConfig(0.01, SQUARED, 10_000, 0))
    assert res.l1_error < 0.01


def test_mixture_model_mode_exact():
    res = mixture_experiment(0.5, -1, 1, 64, TdConfig(1.0, SQUARED, 1, 0), mode="model")
    np.testing.assert_array_equal(res.learned.probs, res.target.probs)
    assert res.l1_error == 0.0


def test_mixture_error_shrinks_with_steps():
    errs = [
        np.mean([mixture_experiment(0.5, -1, 1, 32, TdConfig(0.01, SQUARED, n, s)).l1_error for s in range(3)])
        for n in (100, 1000, 20_000)
    ]
    assert errs[0] > errs[1] > errs[2]


def test_mixture_trace_shape():
    res = mixture_experiment(0.3, -1, 2, 16, TdConfig(0.05, SQUARED, 1000, 1), trace_every=100)
    steps = [s for s, _ in res.trace]
    assert steps[0] == 0 and steps[-1] == 1000
    assert res.trace[-1][1] == pytest.approx(res.l1_error, abs=1e-12)
