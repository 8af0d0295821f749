"""Expected-gain and outage-probability (p(G > alpha)) solvers for finite discounted MDPs."""

from .distributional import (
    BinningRule,
    GainGrid,
    OutageSolution,
    StateDistribution,
    build_binning_rule,
    ccdf_from_distribution,
    evaluate_policy_distribution,
    make_grid,
    outage_value,
    solve_outage,
)
from .expected_gain import ValueTable, greedy_policy, policy_evaluation_exact, q_values, value_iteration
from .mdp_core import (
    MdpModel,
    Policy,
    Transition,
    load_mdp,
    random_mdp,
    recycling_robot,
    save_mdp,
    validate_mdp,
)
from .rollout import RolloutConfig, empirical_ccdf, simulate_gains
from .td import TdConfig, mixture_experiment, td_step

__version__ = "0.1.0"
