"""Planning and evaluation of file transfers over opportunistically
available channels."""

from .analytic import (
    RatioBounds,
    TieError,
    correlation_gap,
    dynamic_expected_time,
    dynamic_lower_bound,
    dynamic_ratio_bounds,
    markov_static_expected_time,
    max_throughput_channel,
    static_expected_time,
    static_optimal_channel,
    static_ratio_upper_bound,
    threshold_H,
)
from .config import PRESETS, ConfigError, load_scenario
from .model import Channel, FileTask, Scenario, ScenarioError, bernoulli_scenario, effective_availability
from .optimizer import (
    POLICY_KINDS,
    build_ssp_graph,
    heuristic_policy,
    policy_for,
    solve_mip,
    solve_policy_iteration,
    solve_shortest_path,
)
from .plans import PolicyPlan
from .simulator import SimConfig, compute_metrics, run_offline_experiment, simulate_batch, simulate_episode

__version__ = "0.1.0"
