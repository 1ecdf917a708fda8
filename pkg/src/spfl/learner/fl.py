"""The federated round loop: the sign/modulus split scheme and the comparison baselines.

Every random quantity is drawn from a stream keyed by
``(seed, purpose, *key, round, device)`` where ``key`` is ``(repetition,)``
for ordinary runs, so strategies that share a repetition see the same data,
device layout, quantization noise and fading.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import channel as ch
from .. import rng as rngs
from ..aggregation import CompensationPolicy, aggregate, update_model
from ..allocator import AllocationPair, alternate
from ..bound import BoundInputs, g_coefficients, one_step_bound_from_probabilities
from ..config import ExperimentConfig
from ..quantizer import decode, expected_squared_error, gradient_delta_sq, knob_values, quantize, signum
from ..transport import transmit, transmit_physical, reconstruct
from .data import Dataset, Partition, make_partition, mixture_centers, noise_factor, sample_mixture
from .models import accuracy, global_loss, local_gradient, make_model, shards_of


@dataclass(frozen=True)
class Strategy:
    kind: str
    fraction: float = 0.75  # scheduling only

    def __post_init__(self):
        if self.kind not in ("spfl", "error_free", "scheduling", "dds", "one_bit"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if not 0 < self.fraction <= 1:
            raise ValueError("scheduling fraction must lie in (0, 1]")


@dataclass
class Environment:
    config: ExperimentConfig
    repetition: int
    model: object
    train: Dataset
    partition: Partition
    shards: list
    test: Dataset
    channel: ch.ChannelParams
    fading_seed: int


@dataclass
class RoundState:
    w: np.ndarray
    policy: CompensationPolicy
    round: int = 0
    elapsed_s: float = 0.0
    allocation: Optional[AllocationPair] = None


@dataclass
class RoundMetrics:
    round: int
    elapsed_s: float
    train_loss: float
    test_acc: float
    bound_value: float
    mean_q: float
    mean_p: float
    devices_rejected: int
    retransmissions: int
    solver_outer_iters: int
    solver_warning: str = ""
    wall_time_s: float = 0.0
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None


@dataclass
class RoundPlan:
    """Everything about a round that does not depend on its random draws."""

    strategy: Strategy
    gradients: np.ndarray
    inputs: BoundInputs
    compensations: np.ndarray
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    bound_value: float = math.nan
    outer_iters: int = 0
    warning: str = ""
    extra: dict = field(default_factory=dict)


def device_distances(cfg: ExperimentConfig, repetition: int) -> np.ndarray:
    """Configured distances, or devices dropped uniformly over the cell's annulus."""
    K = cfg.num_devices
    if cfg.distances_m:
        d = np.asarray(cfg.distances_m, dtype=float)
        if d.size < K:
            raise ValueError(f"{d.size} distances configured for {K} devices")
        return d[:K]
    g = rngs.stream(cfg.seed, rngs.LAYOUT, repetition)
    r2 = g.uniform(cfg.min_distance_m ** 2, cfg.cell_radius_m ** 2, size=K)
    return np.sqrt(r2)


def build_environment(cfg: ExperimentConfig, repetition: int = 0) -> Environment:
    K = cfg.num_devices
    g = rngs.stream(cfg.seed, rngs.DATA, repetition)
    centers = mixture_centers(cfg.num_classes, cfg.feature_dim, cfg.class_separation, g)
    noise = noise_factor(cfg.feature_dim, cfg.feature_noise, cfg.feature_spread, g)
    train = sample_mixture(centers, K * cfg.samples_per_device, g, noise)
    test = sample_mixture(centers, cfg.test_samples, g, noise)
    part = make_partition(cfg.partition, train.y, K, g, cfg.dirichlet_concentration)
    model = make_model(cfg.model, cfg.feature_dim, cfg.num_classes, cfg.hidden)
    channel = ch.params_for(
        K, bandwidth_hz=cfg.bandwidth_hz, noise_dbm_per_hz=cfg.noise_dbm_per_hz,
        pathloss_exponent=cfg.pathloss_exponent, distances_m=device_distances(cfg, repetition),
        tx_power_dbm=cfg.tx_power_dbm, latency_s=cfg.latency_s, model_dim=model.num_params,
        quant_bits=cfg.quant_bits, range_bits=cfg.range_bits,
    )
    fading_seed = int(np.random.SeedSequence([cfg.seed, rngs.FADING, repetition]).generate_state(1)[0])
    return Environment(cfg, repetition, model, train, part, shards_of(train, part), test, channel, fading_seed)


def initial_state(env: Environment) -> RoundState:
    w = env.model.init(rngs.stream(env.config.seed, rngs.INIT, env.repetition))
    return RoundState(w=w, policy=CompensationPolicy(env.config.compensation, env.model.num_params))


def uniform_shares(num_devices: int) -> np.ndarray:
    return AllocationPair.uniform(num_devices).beta


def plan_round(env: Environment, state: RoundState, strategy: Strategy) -> RoundPlan:
    """Local gradients, bound inputs and (for spfl) the round's allocation."""
    cfg, chp = env.config, env.channel
    K = chp.num_devices
    grads = np.stack([local_gradient(env.model, state.w, s) for s in env.shards])
    comps = np.stack([state.policy.vector(k) for k in range(K)])
    delta_fn = gradient_delta_sq if cfg.quant_error == "bound" else expected_squared_error
    delta = np.array([delta_fn(g, cfg.quant_bits) for g in grads])
    inputs = BoundInputs.from_gradients(grads, comps, delta, cfg.eta, cfg.lipschitz)
    plan = RoundPlan(strategy, grads, inputs, comps)
    if strategy.kind == "error_free":
        plan.q = plan.p = np.ones(K)
        plan.bound_value = one_step_bound_from_probabilities(inputs, plan.p, plan.q)
    elif strategy.kind == "spfl":
        coeffs = g_coefficients(inputs)
        alloc, diag = alternate(coeffs, chp, cfg.bandwidth_solver, start=state.allocation)
        plan.alpha, plan.beta = alloc.alpha, alloc.beta
        q = np.asarray(ch.q_sign(alloc.alpha, alloc.beta, chp), dtype=float)
        plan.extra["q_single"] = q
        plan.q = 1.0 - (1.0 - q) ** (cfg.retransmit_limit + 1)
        plan.p = np.asarray(ch.p_modulus(alloc.alpha, alloc.beta, chp), dtype=float)
        plan.bound_value = one_step_bound_from_probabilities(inputs, plan.p, plan.q)
        plan.outer_iters = diag.outer_iterations
        plan.warning = diag.warning
    else:
        bits = chp.sign_bits if strategy.kind == "one_bit" else chp.sign_bits + chp.modulus_bits
        plan.extra["payload_bits"] = bits
        if strategy.kind != "scheduling":
            plan.beta = uniform_shares(K)
            plan.q = np.asarray(ch.full_band_success(plan.beta, bits, chp), dtype=float)
    return plan


def _quantized(env: Environment, state: RoundState, plan: RoundPlan, key: tuple):
    seed, bits = env.config.seed, env.config.quant_bits
    return [quantize(g, bits, rngs.stream(seed, rngs.QUANTIZE, *key, state.round, k))
            for k, g in enumerate(plan.gradients)]


def _spfl_update(env, state, plan, key):
    cfg, chp = env.config, env.channel
    qg = _quantized(env, state, plan, key)
    gains = _gains(env, state, key) if cfg.delivery == "physical" else None
    q_single = plan.extra["q_single"]
    recs, q_used, retx, mod_ok = [], [], 0, []
    for k in range(chp.num_devices):
        g = rngs.stream(cfg.seed, rngs.SIGN_PACKET, *key, state.round, k)
        if gains is None:
            out = transmit(float(q_single[k]), float(plan.p[k]), g, cfg.retransmit_limit)
        else:
            out = transmit_physical(float(plan.alpha[k]), float(plan.beta[k]), float(gains[k]), chp, k, g,
                                    cfg.retransmit_limit)
        recs.append(reconstruct(out, qg[k], plan.compensations[k]))
        q_used.append(out.q_used)
        retx = max(retx, out.retransmissions_used)
        mod_ok.append(out.sign_ok and out.modulus_ok)
    est = aggregate(recs, q_used, chp.num_devices, chp.model_dim)
    for k in range(chp.num_devices):
        if mod_ok[k]:
            state.policy.record_local(k, knob_values(qg[k]))
    return est.g_hat, chp.num_devices - len(est.contributing), retx


def _delivered(env, state, plan, key, beta, bits, devices):
    """Which of ``devices`` get a single full-share packet of ``bits`` through."""
    cfg, chp = env.config, env.channel
    if cfg.delivery == "physical":
        gains = _gains(env, state, key)
        cap = ch.full_band_capacity(beta, gains[devices], chp, devices)
        return cap >= bits / chp.latency_s
    ok = []
    for k in devices:
        g = rngs.stream(cfg.seed, rngs.BASELINE_PACKET, *key, state.round, k)
        ok.append(g.random() < plan.q[k])
    return np.asarray(ok, dtype=bool)


def _gains(env, state, key):
    seed = env.fading_seed
    if len(key) > 1:
        seed = int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])
    return ch.draw_fading(seed, state.round, env.channel.num_devices).gain_sq


def _baseline_update(env, state, plan, key):
    chp = env.channel
    K, kind = chp.num_devices, plan.strategy.kind
    bits = plan.extra["payload_bits"]
    if kind == "scheduling":
        m = max(1, int(round(plan.strategy.fraction * K)))
        # large-scale gain only: the server has statistical CSI, as for spfl
        score = chp.rx_gain
        devices = np.sort(np.argsort(-score, kind="stable")[:m])
        beta = np.full(m, uniform_shares(m)[0])
        plan.beta = np.zeros(K)
        plan.beta[devices] = beta
        plan.q = np.zeros(K)
        plan.q[devices] = ch.full_band_success(beta, bits, chp, devices)
    else:
        devices = np.arange(K)
        beta = plan.beta
    ok = _delivered(env, state, plan, key, beta, bits, devices)
    got = devices[ok]
    if kind == "one_bit":
        votes = np.zeros(chp.model_dim)
        for k in got:
            votes = votes + signum(plan.gradients[k])
        g_hat = np.sign(votes)
    else:
        qg = _quantized(env, state, plan, key)
        g_hat = np.zeros(chp.model_dim)
        for k in got:
            g_hat = g_hat + decode(qg[k])
        # lost packets count as zero vectors; no 1/q correction (that is the split scheme's addition)
        g_hat = g_hat / devices.size
    return g_hat, K - int(got.size), 0


def execute_round(env: Environment, state: RoundState, plan: RoundPlan, key: tuple) -> tuple:
    """Draw the round's randomness; returns ``(g_hat, devices_rejected, retransmissions)``.

    Compensation history in ``state.policy`` is updated in place.
    """
    kind = plan.strategy.kind
    if kind == "error_free":
        qg = _quantized(env, state, plan, key)
        est = aggregate([decode(q) for q in qg], np.ones(len(qg)), len(qg))
        return est.g_hat, 0, 0
    if kind == "spfl":
        return _spfl_update(env, state, plan, key)
    return _baseline_update(env, state, plan, key)


def run_round(env: Environment, state: RoundState, strategy: Strategy, key: Optional[tuple] = None,
              plan: Optional[RoundPlan] = None):
    """One round of the chosen strategy; returns ``(new_state, RoundMetrics)``."""
    t0 = time.perf_counter()
    key = (env.repetition,) if key is None else key
    plan = plan or plan_round(env, state, strategy)
    policy = state.policy
    g_hat, rejected, retx = execute_round(env, state, plan, key)
    w = update_model(state.w, g_hat, env.config.eta)
    policy.record_global(g_hat)
    elapsed = state.elapsed_s + env.config.latency_s * (1 + retx)
    alloc = AllocationPair(plan.alpha, plan.beta) if strategy.kind == "spfl" else None
    new = RoundState(w, policy, state.round + 1, elapsed, alloc)
    mean_p = float(np.mean(plan.p)) if plan.p is not None else math.nan
    if strategy.kind in ("dds", "scheduling") and plan.q is not None:
        mean_p = float(np.mean(plan.q))
    metrics = RoundMetrics(
        round=state.round + 1,
        elapsed_s=elapsed,
        train_loss=global_loss(env.model, w, env.shards),
        test_acc=accuracy(env.model, w, env.test),
        bound_value=float(plan.bound_value),
        mean_q=float(np.mean(plan.q)) if plan.q is not None else math.nan,
        mean_p=mean_p,
        devices_rejected=int(rejected),
        retransmissions=int(retx),
        solver_outer_iters=int(plan.outer_iters),
        solver_warning=plan.warning,
        wall_time_s=time.perf_counter() - t0,
        alpha=plan.alpha,
        beta=plan.beta,
    )
    return new, metrics


def run_repetition(cfg: ExperimentConfig, strategy: Strategy, repetition: int) -> list:
    env = build_environment(cfg, repetition)
    state = initial_state(env)
    out = []
    for _ in range(cfg.rounds):
        state, m = run_round(env, state, strategy)
        out.append(m)
    return out


def strategy_from_config(cfg: ExperimentConfig, name: str) -> Strategy:
    return Strategy(name, cfg.scheduling_fraction)


def run_experiment(cfg: ExperimentConfig, strategies=None) -> list:
    """Rows of ``(strategy, sweep_value, repetition, RoundMetrics)`` over the whole sweep."""
    rows = []
    for name in strategies or cfg.strategies:
        for value, cell in cfg.sweep_cells():
            for r in range(cfg.repetitions):
                for m in run_repetition(cell, strategy_from_config(cell, name), r):
                    rows.append((name, value, r, m))
    return rows
