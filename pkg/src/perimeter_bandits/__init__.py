"""Multi-searcher perimeter patrol as a combinatorial bandit with filtered Poisson feedback."""

from .allocator import (
    CapacityError,
    GapSummary,
    QTable,
    brute_force_optimal,
    optimality_gaps,
    optimality_gaps_arms,
    precompute_q,
    solve_optimal,
    solve_optimal_forced,
)
from .analytics import (
    BoundInputs,
    concentration_check,
    kl_poisson,
    lower_bound_components,
    regret_upper_bound,
    scaled_regret,
)
from .domain import Allocation, CaseI, CaseII, Instance, Interval, allocation_of, detection_vector, intervals_of
from .environment import ArrivalStream, env_step, make_rng
from .harness import ExperimentConfig, RunRecord, run_experiment, sample_instance, summarize
from .policies import FPCUCB1, FPCUCB2, Greedy, PolicyState, ThompsonSampling, policy_observe, policy_select

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "GapSummary",
    "QTable",
    "brute_force_optimal",
    "optimality_gaps",
    "optimality_gaps_arms",
    "precompute_q",
    "solve_optimal",
    "solve_optimal_forced",
    "BoundInputs",
    "concentration_check",
    "kl_poisson",
    "lower_bound_components",
    "regret_upper_bound",
    "scaled_regret",
    "Allocation",
    "CaseI",
    "CaseII",
    "Instance",
    "Interval",
    "allocation_of",
    "detection_vector",
    "intervals_of",
    "ArrivalStream",
    "env_step",
    "make_rng",
    "ExperimentConfig",
    "RunRecord",
    "run_experiment",
    "sample_instance",
    "summarize",
    "FPCUCB1",
    "FPCUCB2",
    "Greedy",
    "PolicyState",
    "ThompsonSampling",
    "policy_observe",
    "policy_select",
]
