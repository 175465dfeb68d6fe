"""mmcgel batch command line."""

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _error_line(error: Exception, **extra: object) -> None:
    """Print one machine-readable JSON error line to stderr."""
    payload = {"error": type(error).__name__, "message": str(error)}
    payload.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(payload), file=sys.stderr)


def _make_runner(args: argparse.Namespace):
    from mmcgel.runner import SimulationRunner

    return SimulationRunner(
        Path(args.config),
        seed=args.seed,
        output_dir=args.output_dir,
        workers=getattr(args, "workers", None),
    )


def cmd_run(args: argparse.Namespace) -> int:
    """Run a single trajectory."""
    _make_runner(args).run_single()
    return EXIT_OK


def cmd_ensemble(args: argparse.Namespace) -> int:
    """Run n_samples stochastic trajectories and the mean energy series."""
    _make_runner(args).run_ensemble()
    return EXIT_OK


def cmd_mesh_study(args: argparse.Namespace) -> int:
    """Repeat a run over the configured grids."""
    _make_runner(args).run_mesh_study()
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    """Run the invariant suite on a tiny grid and print PASS/FAIL lines."""
    from dataclasses import replace

    from mmcgel.check import run_checks
    from mmcgel.config_yaml import parse_config

    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, run=replace(config.run, seed=args.seed))
    results = run_checks(config)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'}  {result.name}: {result.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmcgel",
        description="Energy-stable phase-field simulation of MMC hydrogels (stochastic Cahn-Hilliard)",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Deterministic trajectory
  mmcgel run --config configs/deterministic.yaml

  # 20-sample stochastic ensemble on 4 threads
  mmcgel ensemble --config configs/ensemble.yaml --workers 4

  # Mesh refinement study over mesh_study.grids
  mmcgel mesh-study --config configs/mesh_study.yaml --output-dir out/mesh

  # Invariant self-check
  mmcgel check --config configs/deterministic.yaml

Output directory: --output-dir, else run.output_dir, else $MMCGEL_OUTPUT_DIR,
else ./mmcgel-output.
        """,
    )

    # Global options
    parser.add_argument("--quiet", "-q", action="store_true", help="Only log warnings and errors")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log per-step and per-iteration detail")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", type=str, required=True, help="Path to YAML run configuration")
    common.add_argument("--seed", type=int, help="Override run.seed")
    common.add_argument("--output-dir", type=str, help="Override the output directory")

    # Subcommands
    subparsers = parser.add_subparsers(dest="command", required=True, help="Available commands")
    subparsers.add_parser("run", parents=[common], help="Run a single trajectory").set_defaults(func=cmd_run)
    ensemble_parser = subparsers.add_parser(
        "ensemble", parents=[common], help="Run a stochastic ensemble and its mean energy"
    )
    ensemble_parser.add_argument("--workers", type=int, help="Parallel samples (default: available cores)")
    ensemble_parser.set_defaults(func=cmd_ensemble)
    subparsers.add_parser(
        "mesh-study", parents=[common], help="Repeat a run over several grids"
    ).set_defaults(func=cmd_mesh_study)
    subparsers.add_parser(
        "check", parents=[common], help="Run the invariant suite on an 8x8 grid"
    ).set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point; returns the exit status."""
    from mmcgel.config_yaml import ConfigError
    from mmcgel.energy import DomainError
    from mmcgel.params import ParameterError
    from mmcgel.runner import setup_logging
    from mmcgel.stepper import SimulationError

    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(quiet=args.quiet, verbose=args.verbose)

    try:
        return args.func(args)
    except (ConfigError, ParameterError) as e:
        _error_line(e)
        return EXIT_USAGE
    except SimulationError as e:
        _error_line(e, step=e.step, sample=getattr(e, "sample", None))
        return EXIT_FAILURE
    except (DomainError, OSError, ValueError, RuntimeError) as e:
        _error_line(e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
