"""Command-line entry point: ``mmtrack run | sweep | codebook | accept``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from mmtrack.codebook import design_basis_codebook, save_codebook
from mmtrack.sim_harness import ConfigError, load_config, run_experiment, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("mmtrack")


def _read_config(path: str | None, **overrides):
    text = Path(path).read_text() if path else ""
    return load_config(text, **overrides)


def _cmd_run(args) -> int:
    config = _read_config(args.config, master_seed=args.seed, trials=args.trials)
    trace = run_experiment(config, workers=args.threads)
    write_csv(trace, args.out)
    for scheme in trace.schemes:
        m = trace.mean(scheme)
        log.info("%s: block %d mean %.3f bits/s/Hz", scheme, len(m) - 1, m[-1])
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base = _read_config(args.config, master_seed=args.seed, trials=args.trials)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for v in (float(x) for x in args.velocities.split(",")):
        config = replace(
            base, rho=None, delta_deg=None, velocity_kmh=v,
            carrier_hz=base.carrier_hz or 72e9, block_s=base.block_s or 5e-4,
        )
        trace = run_experiment(config, workers=args.threads)
        path = out_dir / f"throughput_v{v:g}.csv"
        write_csv(trace, path)
        log.info("velocity %g km/h (rho %.4f) -> %s", v, config.evolution.rho, path)
    return EXIT_OK


def _cmd_codebook(args) -> int:
    rng = np.random.default_rng(args.seed)
    basis = design_basis_codebook(
        args.n_rx, args.size, args.phase_order, args.budget, rng,
        first_power=0 if args.include_identity else 1,
    )
    save_codebook(basis, args.out)
    log.info("min chordal distance %.6f, written to %s", basis.min_distance(), args.out)
    return EXIT_OK


def _cmd_accept(args) -> int:
    from mmtrack.acceptance import run_all

    results = run_all()
    return EXIT_OK if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmtrack", description="Hybrid beam tracking simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("--config", help="key = value file; omitted keys take their defaults")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--trials", type=int, help="trial count override")
        p.add_argument("--threads", type=int, default=1, help="worker processes")

    run = sub.add_parser("run", help="simulate both schemes and write a throughput CSV")
    experiment_args(run)
    run.add_argument("--out", required=True)
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="repeat 'run' for several velocities")
    experiment_args(sweep)
    sweep.add_argument("--velocities", default="1.0,3.0,4.4", help="comma-separated km/h")
    sweep.add_argument("--out-dir", required=True)
    sweep.set_defaults(func=_cmd_sweep)

    cb = sub.add_parser("codebook", help="design a basis rotation codebook")
    cb.add_argument("--n-rx", type=int, default=64)
    cb.add_argument("--size", type=int, default=24)
    cb.add_argument("--phase-order", type=int)
    cb.add_argument("--budget", type=int, default=10_000)
    cb.add_argument("--seed", type=int, default=0)
    cb.add_argument("--no-identity", dest="include_identity", action="store_false")
    cb.add_argument("--out", required=True)
    cb.set_defaults(func=_cmd_codebook)

    accept = sub.add_parser("accept", help="run the acceptance checks (about 7 minutes)")
    accept.set_defaults(func=_cmd_accept)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "codebook":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
