"""dualmatch Dual-learning dynamic matching with post-allocation backlog."""
from .algorithms import AlgorithmConfig, DualState
from .experiments import ExperimentConfig, estimate_regret, run_experiment, run_recipe, sweep
from .instances import (
    Trace,
    load_instance,
    load_trace,
    make_lower_bound_instance,
    make_synthetic_multi,
    make_uniform_single,
    validate_instance,
)
from .model import Instance, ServiceMode, evaluate_objective
from .offline import solve_opt, solve_static_dual
from .simulate import run_episode, sample_path

__version__ = "0.1.0"

__all__ = ["__version__", "AlgorithmConfig", "DualState", "ExperimentConfig", "estimate_regret",
           "run_experiment", "run_recipe", "sweep", "Trace", "load_instance", "load_trace",
           "make_lower_bound_instance", "make_synthetic_multi", "make_uniform_single",
           "validate_instance", "Instance", "ServiceMode", "evaluate_objective", "solve_opt",
           "solve_static_dual", "run_episode", "sample_path"]
