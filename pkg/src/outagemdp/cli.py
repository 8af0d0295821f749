"""
Command-line front end.

Exit codes: 0 success, 1 invalid model or failed convergence, 2 usage error
(bad flags, missing input files).  Curves and tables are written as CSV
with a header row; resolved settings are echoed to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import distributional as dist
from .expected_gain import DEFAULT_MAX_ITER, DEFAULT_TOL, greedy_policy, value_iteration
from .mdp_core import (
    MdpFileError,
    MdpValidationError,
    Policy,
    load_mdp,
    load_policy,
    resolve_model_path,
    save_policy,
    validate_mdp,
)
from .rollout import RolloutConfig, empirical_ccdf, simulate_gains
from .td import LOSSES, SQUARED, TdConfig, mixture_experiment

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class CommandFailed(Exception):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _existing(path: str) -> Path:
    try:
        p = resolve_model_path(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _model(path: str, validate: bool = True):
    return load_mdp(_existing(path), validate=validate)


def _echo(args) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    print(f"# {args.command}: " + " ".join(f"{k}={v}" for k, v in items.items()), file=sys.stderr)


def _check_bins(bins: int) -> None:
    if bins < 2:
        raise UsageError("--bins must be at least 2")


# -- commands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    model = _model(args.mdp, validate=False)
    report = validate_mdp(model)
    for v in report.violations:
        print(v)
    if report.ok:
        print("ok")
        return EXIT_OK
    return EXIT_FAIL


def cmd_solve_expected(args) -> int:
    model = _model(args.mdp)
    vt = value_iteration(model, tol=args.tol, max_iter=args.max_iter)
    policy = greedy_policy(model, vt)
    for s in model.states:
        print(f"{s}\t{policy[s]}\t{vt[s]:.6f}")
    if args.out:
        write_csv(args.out, ["state", "value"], [(s, vt[s]) for s in model.states])
    if args.policy_out:
        save_policy(policy, args.policy_out, model)
    if not vt.converged:
        raise CommandFailed(f"value iteration did not converge in {args.max_iter} sweeps")
    return EXIT_OK


def _solve_outage(model, args):
    grids = dist.make_grid(model, args.bins, args.grid)
    return dist.solve_outage(
        model, grids, args.alpha, init=args.init, tol=args.tol, max_iter=args.max_iter, sweep=args.sweep
    )


def cmd_solve_outage(args) -> int:
    _check_bins(args.bins)
    model = _model(args.mdp)
    sol = _solve_outage(model, args)
    for s in model.states:
        q = " ".join(f"{a}={sol.q[(s, a)]:.6f}" for a in model.allowed[s])
        print(f"{s}\t{sol.policy[s]}\tp(G>{args.alpha:g})={sol.value(s):.6f}\t{q}")
    if args.out:
        dist.save_distributions(sol.dists, args.out)
    if args.policy_out:
        save_policy(sol.policy, args.policy_out, model)
    if not sol.converged:
        raise CommandFailed(f"outage search stopped without converging ({sol.status}, {sol.iterations} sweeps)")
    return EXIT_OK


def cmd_ccdf(args) -> int:
    if (args.policy is None) == (args.from_dists is None):
        raise UsageError("give exactly one of --policy or --from-dists")
    if args.from_dists is not None and args.mode != "analytic":
        raise UsageError("--from-dists only supports --mode analytic")
    if args.xs_steps < 1:
        raise UsageError("--xs-steps must be positive")
    _check_bins(args.bins)
    model = _model(args.mdp)
    if args.state not in model.state_index:
        raise UsageError(f"unknown state {args.state!r}")

    if args.from_dists is not None:
        dists = dist.load_distributions(_existing(args.from_dists))
        if args.state not in dists:
            raise UsageError(f"distribution file has no state {args.state!r}")
        lo, hi = float(dists[args.state].grid.centers[0]), float(dists[args.state].grid.centers[-1])
    else:
        try:
            policy = load_policy(_existing(args.policy), model)
        except ValueError as exc:
            raise CommandFailed(str(exc)) from None
        lo, hi = dist.gain_span(model)
    lo = lo if args.xs_min is None else args.xs_min
    hi = hi if args.xs_max is None else args.xs_max
    if hi < lo:
        raise UsageError("--xs-max must not be below --xs-min")
    xs = np.linspace(lo, hi, args.xs_steps)

    if args.mode == "monte-carlo":
        cfg = RolloutConfig(args.episodes, args.truncation_eps, args.seed)
        ys = empirical_ccdf(simulate_gains(model, policy, args.state, cfg), xs)
    else:
        if args.from_dists is None:
            grids = dist.make_grid(model, args.bins, args.grid)
            res = dist.evaluate_policy_distribution(model, policy, grids, init=args.init)
            if not res.converged:
                raise CommandFailed("distribution evaluation did not converge")
            dists = res.dists
        ys = dist.ccdf_from_distribution(dists[args.state], xs)
    write_csv(args.out, ["x", "ccdf"], zip(xs, ys))
    print(f"wrote {len(xs)} points to {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    _check_bins(args.bins)
    model = _model(args.mdp)
    vt = value_iteration(model)
    exp_policy = greedy_policy(model, vt)
    grids = dist.make_grid(model, args.bins, args.grid)
    sol = _solve_outage(model, args)
    exp_dists = dist.evaluate_policy_distribution(model, exp_policy, grids, init=args.init).dists
    header = ["state", "expected_action", "expected_gain", "expected_policy_outage", "outage_action", "outage_value"]
    rows = [
        (s, exp_policy[s], vt[s], dist.outage_value(exp_dists[s], args.alpha), sol.policy[s], sol.value(s))
        for s in model.states
    ]
    print(f"alpha = {args.alpha:g}")
    print("\t".join(header))
    for r in rows:
        print("\t".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in r))
    same = all(exp_policy[s] == sol.policy[s] for s in model.states)
    print("policies identical" if same else "policies differ")
    if args.out:
        write_csv(args.out, header, rows)
    if not (vt.converged and sol.converged):
        raise CommandFailed("a solver did not converge")
    return EXIT_OK


def cmd_td_demo(args) -> int:
    _check_bins(args.bins)
    if not 0.0 <= args.p <= 1.0:
        raise UsageError("--p must lie in [0, 1]")
    try:
        cfg = TdConfig(args.lr, args.loss, args.steps, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = mixture_experiment(args.p, args.mean1, args.mean2, args.bins, cfg, mode=args.mode)
    print(f"l1_error {res.l1_error:.6g}")
    if args.out:
        write_csv(args.out, ["step", "l1_error"], res.trace)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _outage_flags(p: argparse.ArgumentParser, alpha_required: bool = True) -> None:
    p.add_argument("--alpha", type=float, required=alpha_required)
    p.add_argument("--bins", type=int, default=dist.DEFAULT_BINS)
    p.add_argument("--grid", choices=[dist.GLOBAL, dist.CENTERED], default=dist.GLOBAL)
    p.add_argument("--sweep", choices=[dist.INPLACE, dist.SNAPSHOT], default=dist.INPLACE)
    p.add_argument("--init", choices=["point-mass", "uniform"], default="point-mass")
    p.add_argument("--tol", type=float, default=dist.DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=dist.DEFAULT_MAX_ITER)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outage-mdp",
        description="Expected-gain and outage-probability solvers for finite discounted MDPs. "
        "MDP arguments accept a file path or builtin:recycling_robot.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("mdp")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-expected", help="value iteration and greedy policy")
    p.add_argument("mdp")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--out", help="values CSV (state,value)")
    p.add_argument("--policy-out")
    p.set_defaults(func=cmd_solve_expected)

    p = sub.add_parser("solve-outage", help="policy maximizing p(G > alpha)")
    p.add_argument("mdp")
    _outage_flags(p)
    p.add_argument("--out", help="distribution file (JSON, per-state centers/probs)")
    p.add_argument("--policy-out")
    p.set_defaults(func=cmd_solve_outage)

    p = sub.add_parser("ccdf", help="p(G > x | state) curve as CSV")
    p.add_argument("mdp")
    p.add_argument("--policy")
    p.add_argument("--from-dists")
    p.add_argument("--state", required=True)
    p.add_argument("--mode", choices=["analytic", "monte-carlo"], default="analytic")
    p.add_argument("--episodes", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truncation-eps", type=float, default=1e-3)
    p.add_argument("--bins", type=int, default=dist.DEFAULT_BINS)
    p.add_argument("--grid", choices=[dist.GLOBAL, dist.CENTERED], default=dist.GLOBAL)
    p.add_argument("--init", choices=["point-mass", "uniform"], default="point-mass")
    p.add_argument("--xs-min", type=float)
    p.add_argument("--xs-max", type=float)
    p.add_argument("--xs-steps", type=int, default=201)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ccdf)

    p = sub.add_parser("compare", help="expected-gain vs outage policy side by side")
    p.add_argument("mdp")
    _outage_flags(p)
    p.add_argument("--out", help="comparison table CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("td-demo", help="sampled-label mixture convergence experiment")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--mean1", type=float, default=-1.0)
    p.add_argument("--mean2", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--loss", choices=LOSSES, default=SQUARED)
    p.add_argument("--mode", choices=["sampled", "model"], default="sampled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="trace CSV (step,l1_error)")
    p.set_defaults(func=cmd_td_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _echo(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MdpFileError, MdpValidationError, CommandFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
