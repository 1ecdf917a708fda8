"""Command-line entry point: ``spfl run | solve | validate``."""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import channel as ch
from .allocator import METHODS, alternate
from .bound import GCoefficients
from .config import SWEEP_AXES, ConfigError, ExperimentConfig, config_hash, dump_config, load_config
from .learner.fl import run_repetition, strategy_from_config
from .learner.validation import validate_bound

OUTPUT_ENV = "SPFL_OUTPUT_DIR"
DEFAULT_OUTPUT = "spfl_output"
COLUMNS = ("strategy", "sweep_value", "repetition", "round", "elapsed_s", "train_loss", "test_acc", "bound_value",
           "mean_q", "mean_p", "devices_rejected", "solver_outer_iters")
SUMMARY_COLUMNS = ("strategy", "sweep_value", "repetitions", "final_test_acc_mean", "final_test_acc_std",
                   "final_train_loss_mean", "final_train_loss_std")


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def cell_filename(strategy: str, axis: str, value) -> str:
    if value is None:
        return f"{strategy}.csv"
    return f"{strategy}__{axis}_{_fmt(value)}.csv"


def header_line(cfg: ExperimentConfig) -> str:
    return f"# config_hash={config_hash(cfg)} seed={cfg.seed}\n"


def run_cell(cfg: ExperimentConfig, strategy: str, value, cell: ExperimentConfig) -> tuple:
    """All repetitions of one (strategy, sweep value) cell, rendered as CSV text."""
    buf = io.StringIO()
    buf.write(header_line(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    finals = []
    for r in range(cell.repetitions):
        metrics = run_repetition(cell, strategy_from_config(cell, strategy), r)
        for m in metrics:
            w.writerow([strategy, _fmt(value), r, m.round, _fmt(m.elapsed_s), _fmt(m.train_loss), _fmt(m.test_acc),
                        _fmt(m.bound_value), _fmt(m.mean_q), _fmt(m.mean_p), m.devices_rejected,
                        m.solver_outer_iters])
        finals.append((metrics[-1].test_acc, metrics[-1].train_loss))
    return strategy, value, buf.getvalue(), finals


def _run_cell_args(args):
    return run_cell(*args)


def run(cfg: ExperimentConfig, output: Path, workers: int = 1) -> list:
    """Write one CSV per (strategy, sweep value) plus ``summary.csv``; returns the paths."""
    output.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, s, value, cell) for s in cfg.strategies for value, cell in cfg.sweep_cells()]
    workers = max(1, min(workers, len(jobs), os.cpu_count() or 1))
    if workers == 1:
        results = [_run_cell_args(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    paths = []
    summary = io.StringIO()
    summary.write(header_line(cfg))
    sw = csv.writer(summary, lineterminator="\n")
    sw.writerow(SUMMARY_COLUMNS)
    for strategy, value, text, finals in results:  # job order, not completion order
        path = output / cell_filename(strategy, cfg.sweep_axis, value)
        path.write_text(text)
        paths.append(path)
        acc, loss = np.array(finals).T
        sw.writerow([strategy, _fmt(value), len(finals), _fmt(acc.mean()), _fmt(acc.std()), _fmt(loss.mean()),
                     _fmt(loss.std())])
    (output / "summary.csv").write_text(summary.getvalue())
    (output / "config.txt").write_text(dump_config(cfg))
    return paths + [output / "summary.csv"]


# allocator instance files

CHANNEL_KEYS = {
    "bandwidth_hz": float, "noise_dbm_per_hz": float, "pathloss_exponent": float, "tx_power_dbm": float,
    "latency_s": float, "model_dim": int, "quant_bits": int, "range_bits": int,
}
TABLE_HEADER = ("device", "a", "b", "c", "d", "distance_m")


def parse_coeffs(text: str):
    """``key = value`` channel lines, then a CSV table ``device,a,b,c,d,distance_m``.

    Returns ``(GCoefficients, ChannelParams)``.  Omitted channel keys take the
    experiment defaults.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    try:
        start = next(i for i, ln in enumerate(lines) if ln.replace(" ", "").startswith("device,"))
    except StopIteration:
        raise ValueError(f"missing table header {','.join(TABLE_HEADER)}") from None
    settings = {}
    for ln in lines[:start]:
        if "=" not in ln:
            raise ValueError(f"expected 'key = value', got {ln!r}")
        key, raw = (s.strip() for s in ln.split("=", 1))
        if key not in CHANNEL_KEYS:
            raise ValueError(f"unknown key {key!r}; valid: {', '.join(CHANNEL_KEYS)}")
        try:
            settings[key] = CHANNEL_KEYS[key](float(raw)) if CHANNEL_KEYS[key] is int else float(raw)
        except ValueError:
            raise ValueError(f"{key}: cannot parse {raw!r}") from None
    header = tuple(h.strip() for h in lines[start].split(","))
    if header != TABLE_HEADER:
        raise ValueError(f"table header must be {','.join(TABLE_HEADER)}, got {','.join(header)}")
    rows = []
    for ln in lines[start + 1:]:
        cells = [c.strip() for c in ln.split(",")]
        if len(cells) != len(TABLE_HEADER):
            raise ValueError(f"expected {len(TABLE_HEADER)} columns, got {len(cells)} in {ln!r}")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            raise ValueError(f"non-numeric entry in {ln!r}") from None
    if not rows:
        raise ValueError("the device table is empty")
    t = np.array(rows)
    if not np.all(np.isfinite(t)) or np.any(t[:, 4] <= 0):
        raise ValueError("coefficients must be finite and distances positive")
    model_dim = settings.pop("model_dim", 210)
    params = ch.params_for(len(rows), distances_m=t[:, 4], model_dim=model_dim, **settings)
    return GCoefficients(t[:, 0], t[:, 1], t[:, 2], t[:, 3]), params


def solve_text(text: str, method: str = "sca") -> str:
    coeffs, params = parse_coeffs(text)
    pair, diag = alternate(coeffs, params, method=method)
    q = ch.q_sign(pair.alpha, pair.beta, params)
    p = ch.p_modulus(pair.alpha, pair.beta, params)
    out = io.StringIO()
    out.write("device,alpha,beta,q_sign,p_modulus\n")
    for k in range(len(coeffs)):
        out.write(f"{k},{pair.alpha[k]:.10g},{pair.beta[k]:.10g},{q[k]:.10g},{p[k]:.10g}\n")
    out.write(f"objective = {diag.objective_trace[-1]:.12g}\n")
    out.write(f"method = {method}\nouter_iterations = {diag.outer_iterations}\n"
              f"inner_iterations = {diag.inner_iterations}\nconverged = {diag.converged}\n"
              f"wall_time_s = {diag.wall_time_s:.3g}\n")
    if diag.warning:
        out.write(f"warning = {diag.warning}\n")
    return out.getvalue()


def validate_text(cfg: ExperimentConfig, rounds: int, branches: int, sigmas: float = 3.0) -> tuple:
    check = validate_bound(cfg, rounds=rounds, branches=branches)
    ok = check.holds(sigmas)
    out = io.StringIO()
    out.write(header_line(cfg))
    out.write("round,bound,mean_decrement,std_error,gap,holds\n")
    for n in range(rounds):
        out.write(f"{n},{check.bound[n]!r},{check.mean_decrement[n]!r},{check.std_error[n]!r},"
                  f"{check.gap[n]!r},{bool(ok[n])}\n")
    return out.getvalue(), bool(ok.all())


def _output_dir(arg) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spfl", description="Sign-packet federated learning simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every (strategy, sweep value) cell of a config")
    r.add_argument("--config", required=True)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--output", help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    s = sub.add_parser("solve", help="allocate power and bandwidth for one coefficient file")
    s.add_argument("--coeffs", required=True)
    s.add_argument("--method", choices=METHODS, default="sca")
    v = sub.add_parser("validate", help="Monte-Carlo check of the one-step bound")
    v.add_argument("--config", required=True)
    v.add_argument("--rounds", type=int, default=30)
    v.add_argument("--branches", type=int, default=200)
    v.add_argument("--output")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg = load_config(args.config)
            paths = run(cfg, _output_dir(args.output), args.workers)
            print(f"wrote {len(paths)} files to {paths[-1].parent}")
            return 0
        if args.command == "solve":
            print(solve_text(Path(args.coeffs).read_text(), args.method), end="")
            return 0
        cfg = load_config(args.config)
        text, ok = validate_text(cfg, args.rounds, args.branches)
        if args.output:
            out = Path(args.output)
            out.mkdir(parents=True, exist_ok=True)
            (out / "bound_check.csv").write_text(text)
        print(text, end="")
        print("bound holds in every round" if ok else "bound violated in at least one round")
        return 0 if ok else 1
    except (ConfigError, ValueError, OSError) as exc:
        print(f"spfl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
