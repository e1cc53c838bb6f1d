"""Command-line front end.

Subcommands: simulate (Monte-Carlo batch), linear (four-node analysis sweep),
channel-curve (outage probability vs distance), bounds (closed-form handshake
bounds). Exit codes: 0 success, 2 configuration error, 3 at least one
non-convergent simulation run.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from . import batch, channel, linear
from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENT = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratmesh",
        description="Setup-phase experiments for hierarchical multi-RAT mesh networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH",
                       help="key = value config file (defaults match the reference scenario)")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory")

    sim = sub.add_parser("simulate", help="run the Monte-Carlo setup batch")
    common(sim)
    sim.add_argument("--runs", metavar="N|auto",
                     help="replication count, or 'auto' for CI-driven stopping")
    sim.add_argument("--r-a", type=float, metavar="METERS", dest="r_a",
                     help="deployment disk radius")
    sim.add_argument("--literal-rules", action="store_true",
                     help="use the rule tables exactly as printed")
    sim.add_argument("--reparent-orphans", action="store_true",
                     help="re-parent members of absorbed cluster heads instead of orphaning")
    sim.add_argument("--workers", type=int, metavar="N",
                     help="worker processes for replications")

    lin = sub.add_parser("linear", help="four-node linear network analysis sweep")
    common(lin)

    curve = sub.add_parser("channel-curve", help="outage probability vs distance")
    common(curve)
    curve.add_argument("--rat", choices=["1", "2", "both"], default="both")

    bounds = sub.add_parser("bounds", help="closed-form handshake bounds")
    common(bounds)
    bounds.add_argument("--intensity", type=float, metavar="LAMBDA",
                        help="expected device count (defaults to the config value)")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs if args.runs == "auto" else _parse_runs(args.runs)
    if getattr(args, "r_a", None) is not None:
        overrides["r_a"] = args.r_a
    if getattr(args, "literal_rules", False):
        overrides["literal_rules"] = True
    if getattr(args, "reparent_orphans", False):
        overrides["reparent_orphans"] = True
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _parse_runs(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"--runs expects an integer or 'auto', got {raw!r}")


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    result = batch.run_batch(cfg)
    paths = batch.emit_outputs(result, args.out)
    stats = result.stats
    unique = stats.metrics["unique_master"]
    print(f"runs executed: {stats.runs_executed} "
          f"(converged {stats.runs_converged}, aborted {stats.runs_aborted})")
    print(f"Pr[unique master] = {unique.mean:.4f} "
          f"(ci half-width {unique.ci_half_width:.4g}, basis {unique.margin_basis})")
    print(f"stop: {stats.stop_reason}")
    for p in paths:
        print(f"wrote {p}")
    if stats.runs_aborted:
        for rec in result.aborted:
            print(f"run {rec.run_id} did not converge: {rec.diagnostic}",
                  file=sys.stderr)
        return EXIT_NONCONVERGENT
    return EXIT_OK


def _cmd_linear(args) -> int:
    cfg = _load(args)
    steps = int(round((cfg.linear_d_min_stop - cfg.linear_d_min_start)
                      / cfg.linear_d_min_step))
    grid = [cfg.linear_d_min_start + k * cfg.linear_d_min_step
            for k in range(steps + 1)]
    rows = linear.figure4_sweep(grid, cfg.rho, cfg.rats(), cfg.channel_params())
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "linear_sweep.csv")
    linear.write_sweep_csv(rows, path)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_channel_curve(args) -> int:
    cfg = _load(args)
    params = cfg.channel_params()
    n_steps = int(cfg.curve_d_max // cfg.curve_d_step)
    grid = [cfg.curve_d_step * k for k in range(1, n_steps + 1)]
    os.makedirs(args.out, exist_ok=True)
    wanted = (1, 2) if args.rat == "both" else (int(args.rat),)
    for rat in cfg.rats():
        if rat.rat_id not in wanted:
            continue
        rows = channel.channel_curve(rat, grid, params,
                                     literal_sign=cfg.literal_q_sign)
        path = os.path.join(args.out, f"channel_curve_r{rat.rat_id}.csv")
        channel.write_curve_csv(rows, path)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    cfg = _load(args)
    intensity = args.intensity if args.intensity is not None else cfg.intensity
    if intensity <= 0:
        raise ConfigError("intensity must be positive")
    upper, lower = batch.analytic_bounds(intensity)
    standard = batch.expected_edges_standard(intensity)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bounds.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value"])
        writer.writerow(["expected_handshakes_upper", f"{upper:.6g}"])
        writer.writerow(["expected_handshakes_lower", f"{lower:.6g}"])
        writer.writerow(["expected_handshakes_upper_standard", f"{standard:.6g}"])
    print(f"upper bound: {upper:.6g}")
    print(f"lower bound: {lower:.6g}")
    print(f"upper bound (standard edge count): {standard:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "linear": _cmd_linear,
    "channel-curve": _cmd_channel_curve,
    "bounds": _cmd_bounds,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
