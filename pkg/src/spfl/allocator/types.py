from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

BETA_FLOOR = 1e-4


@dataclass(frozen=True)
class AllocationPair:
    """Per-device power split ``alpha`` (sign share) and bandwidth share ``beta``."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if a.shape != b.shape:
            raise ValueError("alpha and beta must have one entry per device")
        if np.any((a < 0) | (a > 1)):
            raise ValueError("alpha must lie in [0, 1]")
        if np.any((b < 0) | (b >= 1)):
            raise ValueError("beta must lie in [0, 1)")
        if b.sum() > 1 + 1e-12:
            raise ValueError(f"bandwidth shares sum to {b.sum()} > 1")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def uniform(cls, num_devices: int, alpha: float = 0.5, slack: float = 1e-3) -> "AllocationPair":
        return cls(np.full(num_devices, alpha), np.full(num_devices, (1.0 - slack) / num_devices))


@dataclass
class SolverDiagnostics:
    method: str
    outer_iterations: int = 0
    inner_iterations: int = 0
    objective_trace: List[float] = field(default_factory=list)
    root_residuals: List[float] = field(default_factory=list)
    case_counts: dict = field(default_factory=dict)
    converged: bool = True
    warning: str = ""
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)
