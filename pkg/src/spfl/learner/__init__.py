"""Toy federated workload and the round loop."""

from .data import Dataset, Partition, dirichlet_partition, iid_partition, label_tv_distance, make_partition
from .fl import (Environment, RoundMetrics, RoundPlan, RoundState, Strategy, build_environment, execute_round,
                 initial_state, plan_round, run_experiment, run_repetition, run_round)
from .models import LogisticModel, MLPModel, accuracy, global_loss, local_gradient, local_loss, make_model
from .validation import BoundCheck, validate_bound

__all__ = [
    "Dataset", "Partition", "dirichlet_partition", "iid_partition", "label_tv_distance", "make_partition",
    "Environment", "RoundMetrics", "RoundPlan", "RoundState", "Strategy", "build_environment", "execute_round",
    "initial_state", "plan_round", "run_experiment", "run_repetition", "run_round",
    "LogisticModel", "MLPModel", "accuracy", "global_loss", "local_gradient", "local_loss", "make_model",
    "BoundCheck", "validate_bound",
]
