#!/usr/bin/env python3
"""
Grasp Contact Refiner - Main Entry Point

Refines hand poses so that hand/object contact matches a target contact map,
and builds and scores synthetic refinement datasets.

This main.py only contains:
1. Command line argument parsing
2. Environment and run config loading
3. Pipeline initialization with dependency injection
4. Mapping library errors to exit codes
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

# Add src directory to Python path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config import Config, load_run_config
from errors import ConfigError, GraspRefinerError
from outputs import OutputDirectory
from pipeline import GraspRefinementPipeline

logger = logging.getLogger("grasp-refiner")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
KEEP_BEST_HELP = (
    "Return each restart's lowest-loss iterate instead of its final one. "
    "Gradient scales only freeze (0) or free a parameter block; lr_scale sets step sizes"
)


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Run config file (.json or .toml)")
    parser.add_argument("--seed", type=int, help="Seed for every random stream")
    parser.add_argument("--hand-model", help="Hand model file (.json or .npz); default is the synthetic hand")
    parser.add_argument("--debug", action="store_true", help="Enable debug mode")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=None,
        help="Set logging level",
    )
    parser.add_argument("--log-file", default=None, help="Log file path")


def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--force", action="store_true", help="Write into a non-empty output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grasp-refiner", description="Grasp Contact Refiner")
    commands = parser.add_subparsers(dest="command", required=True)

    optimize = commands.add_parser("optimize", help="Refine a grasp (or every sample of a dataset)")
    _add_common(optimize)
    _add_output(optimize)
    optimize.add_argument("--object", help="Object mesh (.obj or .ply)")
    optimize.add_argument("--init", help="Initial hand parameters (JSON)")
    optimize.add_argument(
        "--targets",
        help="Target source: file:PATH | reference:PATH | object-only:PATH | precomputed:PATH",
    )
    optimize.add_argument("--dataset", help="Refine every sample of this dataset directory instead")
    optimize.add_argument("--restarts", type=_positive_int, help="Number of restarts")
    optimize.add_argument("--keep-best", action="store_true", default=None, help=KEEP_BEST_HELP)
    optimize.add_argument("--scale", type=float, default=1.0, help="Object units to mm")
    optimize.add_argument("--object-samples", type=_positive_int, help="Use a seeded subset of object vertices")

    perturb = commands.add_parser("perturb", help="Build a perturbed dataset")
    _add_common(perturb)
    _add_output(perturb)
    perturb.add_argument("--dataset", help="Take objects and true poses from this dataset")
    perturb.add_argument("--object", help="Object mesh (.obj or .ply)")
    perturb.add_argument("--init", help="True hand parameters (JSON)")
    perturb.add_argument("--scale", type=float, default=1.0, help="Object units to mm")

    evaluate = commands.add_parser("evaluate", help="Score a dataset, optionally with refined results")
    _add_common(evaluate)
    _add_output(evaluate)
    evaluate.add_argument("--dataset", required=True, help="Dataset directory")
    evaluate.add_argument("--results", help="Output directory of 'optimize --dataset'")

    features = commands.add_parser("features", help="Export per-point features")
    _add_common(features)
    _add_output(features)
    features.add_argument("--object", required=True, help="Object mesh (.obj or .ply)")
    features.add_argument("--init", required=True, help="Hand parameters (JSON)")
    features.add_argument("--targets", help="Also write quantized contact labels from this target source")
    features.add_argument("--scale", type=float, default=1.0, help="Object units to mm")
    features.add_argument("--object-samples", type=_positive_int, default=2048, help="Sampled object points")
    features.add_argument("--format", choices=["csv", "json"], default="csv", help="Feature file format")

    roundtrip = commands.add_parser("roundtrip", help="Synthesize, perturb, refine and evaluate")
    _add_common(roundtrip)
    _add_output(roundtrip)
    roundtrip.add_argument("--grasps", type=_positive_int, default=50, help="Number of synthetic grasps")
    roundtrip.add_argument("--restarts", type=_positive_int, help="Number of restarts")
    roundtrip.add_argument("--keep-best", action="store_true", default=None, help=KEEP_BEST_HELP)
    roundtrip.add_argument("--object-samples", type=_positive_int, help="Use a seeded subset of object vertices")

    synth = commands.add_parser("synth", help="Write synthetic grasps as a perturbed dataset")
    _add_common(synth)
    _add_output(synth)
    synth.add_argument("--grasps", type=_positive_int, default=10, help="Number of synthetic grasps")

    make_hand = commands.add_parser("make-hand", help="Write the synthetic hand model file")
    _add_common(make_hand)
    make_hand.add_argument("--out", required=True, help="Model file (.json or .npz)")
    make_hand.add_argument("--force", action="store_true", help="Overwrite an existing file")
    return parser


def parse_arguments(argv: Optional[List[str]] = None) -> Dict[str, Any]:
    """Parse command line arguments."""
    return vars(build_parser().parse_args(argv))


def configure_logging(log_level: str, log_file: Optional[str], debug: bool) -> None:
    """Configure root logging: stderr stream handler plus an optional file handler."""
    level = logging.DEBUG if debug else getattr(logging, log_level.upper())
    root = logging.getLogger()
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    logger.info(f"Logging configured: level={logging.getLevelName(level)}, file={log_file}, debug={debug}")


def _require(args: Dict[str, Any], *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if not args.get(name)]
    if missing:
        raise ConfigError(f"{args['command']} needs {', '.join(missing)}")


def run(args: Dict[str, Any]) -> int:
    """Execute one parsed command; returns the exit code."""
    runtime = Config.from_environment()
    configure_logging(
        args.get("log_level") or runtime.log_level,
        args.get("log_file") if args.get("log_file") is not None else runtime.log_file,
        args.get("debug") or runtime.debug_mode,
    )
    run_config = load_run_config(args.get("config")).with_overrides(
        seed=args.get("seed"), n_restart=args.get("restarts"), keep_best=args.get("keep_best")
    )
    if run_config.optim.workers == 1 and runtime.max_workers > 1:
        run_config = run_config.model_copy(
            update={"optim": run_config.optim.model_copy(update={"workers": runtime.max_workers})}
        )
    pipeline = GraspRefinementPipeline(runtime, run_config, hand_model_path=args.get("hand_model"))
    command = args["command"]

    if command == "make-hand":
        path = pipeline.make_hand(args["out"], force=args["force"])
        logger.info(f"Hand model written to {path}")
        return 0

    out = OutputDirectory(args["out"], force=args["force"])
    if command == "optimize":
        if args.get("dataset"):
            pipeline.optimize_dataset_dir(args["dataset"], out, args.get("object_samples"))
        else:
            _require(args, "object", "init", "targets")
            pipeline.optimize_grasp(
                args["object"], args["init"], args["targets"], out, args["scale"], args.get("object_samples")
            )
    elif command == "perturb":
        pipeline.perturb(out, args.get("dataset"), args.get("object"), args.get("init"), args["scale"])
    elif command == "evaluate":
        pipeline.evaluate(args["dataset"], out, args.get("results"))
    elif command == "features":
        pipeline.features(
            args["object"],
            args["init"],
            out,
            args["scale"],
            args["object_samples"],
            args.get("targets"),
            args["format"],
        )
    elif command == "roundtrip":
        report = pipeline.roundtrip(args["grasps"], out, args.get("object_samples"))
        print(report.to_markdown())
    elif command == "synth":
        pipeline.synth(args["grasps"], out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point: parse arguments, run the command, map errors to exit codes.

    Library errors print one JSON object to stderr and exit with the error's
    code (2 for bad inputs, 1 otherwise).
    """
    args = parse_arguments(argv)
    try:
        return run(args)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 1
    except GraspRefinerError as e:
        logger.error(f"{e.__class__.__name__}: {e.message}")
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        print(json.dumps({"error": e.__class__.__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
