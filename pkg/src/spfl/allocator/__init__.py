"""Per-round power split and bandwidth allocation."""

from .alternating import METHODS, alternate
from .objective import g_beta_derivs, objective
from .penalty import MU_SCHEDULE, optimize_bandwidth_penalty
from .power import GAMMA1, gprime, optimize_power, scan_grid
from .sca import GAMMA2, SolverError, Surrogate, case_labels, optimize_bandwidth_sca
from .types import BETA_FLOOR, AllocationPair, SolverDiagnostics

__all__ = [
    "AllocationPair", "SolverDiagnostics", "SolverError", "Surrogate", "BETA_FLOOR", "GAMMA1", "GAMMA2",
    "MU_SCHEDULE", "METHODS", "alternate", "case_labels", "g_beta_derivs", "gprime", "objective",
    "optimize_bandwidth_penalty", "optimize_bandwidth_sca", "optimize_power", "scan_grid",
]
