"""Experiment configuration: a flat ``key = value`` text file with documented defaults.

Blank lines and ``#`` comments are ignored.  List-valued keys take comma
separated values.  Every key is optional; omitted keys fall back to the
defaults below (20 devices, 10 MHz, -174 dBm/Hz, -4 dBm, 3 bits, 0.5 s,
eta = 0.05, path-loss exponent 3, Dirichlet concentration 0.5).
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .aggregation import COMPENSATION_KINDS

STRATEGIES = ("spfl", "error_free", "scheduling", "dds", "one_bit")
SWEEP_AXES = {
    "none": None,
    "power": "tx_power_dbm",
    "latency": "latency_s",
    "devices": "num_devices",
    "bits": "quant_bits",
    "dirichlet": "dirichlet_concentration",
}
SOLVERS = ("sca", "penalty")
DELIVERY_MODES = ("bernoulli", "physical")
QUANT_ERRORS = ("bound", "expected")
PARTITIONS = ("iid", "dirichlet")
MODELS = ("logistic", "mlp")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # wireless
    num_devices: int = 20
    bandwidth_hz: float = 10e6
    noise_dbm_per_hz: float = -174.0
    pathloss_exponent: float = 3.0
    tx_power_dbm: float = -4.0
    latency_s: float = 0.5
    quant_bits: int = 3
    range_bits: int = 64
    cell_radius_m: float = 500.0
    min_distance_m: float = 10.0
    distances_m: tuple = ()  # empty: drop devices uniformly in the cell, per repetition
    # learning
    eta: float = 0.05
    lipschitz: Optional[float] = None  # None means 1/eta
    rounds: int = 100
    repetitions: int = 1
    seed: int = 0
    strategies: tuple = ("spfl",)
    scheduling_fraction: float = 0.75
    compensation: str = "previous_global_modulus"
    quant_error: str = "expected"  # delta^2 fed to the allocator: exact "expected" MSE or the "bound"
    retransmit_limit: int = 0
    bandwidth_solver: str = "sca"
    delivery: str = "bernoulli"
    # sweep
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    # data and model
    partition: str = "dirichlet"
    dirichlet_concentration: float = 0.5
    num_classes: int = 10
    feature_dim: int = 20
    samples_per_device: int = 100
    test_samples: int = 2000
    class_separation: float = 3.0
    feature_noise: float = 1.0
    feature_spread: float = 1.0  # ratio of largest to smallest noise standard deviation
    model: str = "logistic"
    hidden: int = 16

    def __post_init__(self):
        errors = _check(self)
        if errors:
            raise ConfigError("; ".join(errors))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def sweep_cells(self) -> list:
        """``(sweep_value, config)`` for every point of the sweep grid."""
        key = SWEEP_AXES[self.sweep_axis]
        if key is None:
            return [(None, self)]
        kind = _FIELD_TYPES[key]
        return [(v, self.replace(**{key: kind(v)})) for v in self.sweep_values]

    @property
    def l_eta(self) -> float:
        return 1.0 if self.lipschitz is None else self.lipschitz * self.eta


def _check(c: ExperimentConfig) -> list:
    err = []

    def need(ok, name, msg):
        if not ok:
            err.append(f"{name}: {msg}")

    need(c.num_devices >= 1, "num_devices", "must be >= 1")
    for name in ("bandwidth_hz", "pathloss_exponent", "latency_s", "eta", "cell_radius_m", "min_distance_m",
                 "feature_noise"):
        need(getattr(c, name) > 0, name, "must be positive")
    need(c.min_distance_m < c.cell_radius_m, "min_distance_m", "must be below cell_radius_m")
    need(c.quant_bits >= 1, "quant_bits", "must be >= 1")
    need(c.range_bits >= 0, "range_bits", "must be >= 0")
    need(c.lipschitz is None or c.lipschitz > 0, "lipschitz", "must be positive")
    need(c.rounds >= 1, "rounds", "must be >= 1")
    need(c.repetitions >= 1, "repetitions", "must be >= 1")
    need(len(c.strategies) >= 1, "strategies", "must name at least one strategy")
    for s in c.strategies:
        need(s in STRATEGIES, "strategies", f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")
    need(0 < c.scheduling_fraction <= 1, "scheduling_fraction", "must lie in (0, 1]")
    need(c.compensation in COMPENSATION_KINDS, "compensation",
         f"unknown policy {c.compensation!r}; valid: {', '.join(COMPENSATION_KINDS)}")
    need(c.retransmit_limit >= 0, "retransmit_limit", "must be >= 0")
    need(c.bandwidth_solver in SOLVERS, "bandwidth_solver", f"valid: {', '.join(SOLVERS)}")
    need(c.quant_error in QUANT_ERRORS, "quant_error", f"valid: {', '.join(QUANT_ERRORS)}")
    need(c.delivery in DELIVERY_MODES, "delivery", f"valid: {', '.join(DELIVERY_MODES)}")
    need(c.sweep_axis in SWEEP_AXES, "sweep_axis", f"valid: {', '.join(SWEEP_AXES)}")
    if c.sweep_axis != "none":
        need(len(c.sweep_values) >= 1, "sweep_values", "the sweep grid is empty")
    need(c.partition in PARTITIONS, "partition", f"valid: {', '.join(PARTITIONS)}")
    need(c.dirichlet_concentration > 0, "dirichlet_concentration", "must be positive")
    need(c.feature_spread >= 1, "feature_spread", "must be >= 1")
    need(c.num_classes >= 2, "num_classes", "must be >= 2")
    need(c.feature_dim >= 1, "feature_dim", "must be >= 1")
    need(c.samples_per_device >= 1, "samples_per_device", "must be >= 1")
    need(c.test_samples >= 1, "test_samples", "must be >= 1")
    need(c.model in MODELS, "model", f"valid: {', '.join(MODELS)}")
    need(c.hidden >= 1, "hidden", "must be >= 1")
    if c.distances_m:
        need(len(c.distances_m) == c.num_devices or c.sweep_axis == "devices", "distances_m",
             f"{len(c.distances_m)} distances for {c.num_devices} devices")
        need(all(d > 0 for d in c.distances_m), "distances_m", "must be positive")
    return err


_FIELD_TYPES = {
    f.name: {"int": int, "float": float, "str": str, "tuple": tuple, "Optional[float]": float}[f.type]
    for f in dataclasses.fields(ExperimentConfig)
}
_LIST_ITEM = {"distances_m": float, "strategies": str, "sweep_values": float}


def _parse_value(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind is tuple:
            item = _LIST_ITEM[name]
            return tuple(item(v.strip()) for v in raw.split(",") if v.strip())
        if name == "lipschitz" and raw.lower() in ("", "none", "auto"):
            return None
        if kind is int:
            as_float = float(raw)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from None


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Every field, in declaration order; ``parse_config`` inverts it exactly."""
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in dataclasses.fields(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]
