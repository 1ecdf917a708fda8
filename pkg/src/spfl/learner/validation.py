"""Monte-Carlo check of the one-step bound along a training trajectory."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..aggregation import update_model
from ..config import ExperimentConfig
from .fl import Strategy, build_environment, execute_round, initial_state, plan_round, run_round
from .models import global_loss


@dataclass
class BoundCheck:
    """Per-round bound against the Monte-Carlo loss change from the same state."""

    bound: np.ndarray
    mean_decrement: np.ndarray  # mean of F(w_{n+1}) - F(w_n) over branches
    std_error: np.ndarray
    epsilon_sq: np.ndarray      # mean over devices, per round

    @property
    def gap(self) -> np.ndarray:
        return self.bound - self.mean_decrement

    def holds(self, sigmas: float = 3.0) -> np.ndarray:
        return self.mean_decrement <= self.bound + sigmas * self.std_error


def validate_bound(cfg: ExperimentConfig, rounds: int = 30, branches: int = 200, repetition: int = 0,
                   strategy: str = "spfl") -> BoundCheck:
    """At each round, replay the random part ``branches`` times from the same model.

    The allocation and bound depend only on the current model, so they are
    computed once per round; each branch redraws quantization noise and packet
    outcomes.  The trajectory then moves on along an ordinary round.
    """
    env = build_environment(cfg, repetition)
    state = initial_state(env)
    strat = Strategy(strategy, cfg.scheduling_fraction)
    bound, mean, se, eps = [], [], [], []
    for _ in range(rounds):
        plan = plan_round(env, state, strat)
        f0 = global_loss(env.model, state.w, env.shards)
        dec = np.empty(branches)
        for b in range(branches):
            scratch = copy.deepcopy(state)
            g_hat, _, _ = execute_round(env, scratch, plan, (repetition, 1 + b))
            w = update_model(state.w, g_hat, cfg.eta)
            dec[b] = global_loss(env.model, w, env.shards) - f0
        bound.append(plan.bound_value)
        mean.append(dec.mean())
        se.append(dec.std(ddof=1) / np.sqrt(branches))
        eps.append(float(np.mean(plan.inputs.epsilon_sq)))
        state, _ = run_round(env, state, strat, plan=plan)
    return BoundCheck(np.array(bound), np.array(mean), np.array(se), np.array(eps))
