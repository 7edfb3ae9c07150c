"""
BlockSplat CLI Tool

Command-line interface for the block-wise reconstruction pipeline.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from .config import PipelineConfig, load_config
from .exceptions import BlockSplatError, ConfigurationError
from .pipeline import run_eval, run_merge, run_optimize, run_partition, run_render
from .scene.synthetic import generate_synthetic_scene
from .utils import Timer, get_logger, parse_overrides, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _print_summary(summary: dict):
    print("📦 Partition summary")
    print(f"   blocks:          {summary['n_blocks']}")
    print(f"   views / block:   mean {summary['n_views_mean']:.1f}, max {summary['n_views_max']}")
    print(f"   points / block:  mean {summary['n_points_mean']:.1f}, max {summary['n_points_max']}")
    print(f"   points in roi:   {summary['n_points_total']}")


def cmd_partition(config: PipelineConfig, args) -> int:
    plan = run_partition(config)
    _print_summary(plan.summary())
    print(f"✅ Wrote {Path(config.output_dir) / 'blockplan.json'}")
    return EXIT_OK


def cmd_optimize(config: PipelineConfig, args) -> int:
    block_ids = None if args.block is None else [args.block]
    outcome = run_optimize(config, block_ids, workers=args.workers, log_level=args.log_level)
    failed = sorted(b for b, err in outcome.items() if err)
    if failed:
        print(f"❌ {len(failed)} of {len(outcome)} blocks failed: {failed}")
        return EXIT_FAILURE
    print(f"✅ Optimized {len(outcome)} blocks")
    return EXIT_OK


def cmd_merge(config: PipelineConfig, args) -> int:
    scene = run_merge(config)
    print(f"✅ Merged {len(scene)} Gaussians into {Path(config.output_dir) / 'scene' / 'point_cloud.ply'}")
    return EXIT_OK


def cmd_render(config: PipelineConfig, args) -> int:
    written = run_render(config, args.poses)
    print(f"✅ Rendered {len(written)} images")
    return EXIT_OK


def cmd_eval(config: PipelineConfig, args) -> int:
    report = run_eval(config)
    print(f"📊 PSNR {report.mean_psnr:.2f} dB | SSIM {report.mean_ssim:.4f} over {len(report.views)} views")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.gaussians < 1 or args.views < 1 or args.resolution < 1:
        raise ConfigurationError("--gaussians, --views and --resolution must be positive")
    scene, model = generate_synthetic_scene(args.gaussians, args.views, args.resolution, args.seed)
    config_path = scene.write(args.out, model, iterations=args.iterations)
    print(f"✅ Wrote synthetic scene to {args.out}")
    print(f"🚀 Next: blocksplat --config {config_path} partition")
    return EXIT_OK


COMMANDS = {
    "partition": cmd_partition,
    "optimize": cmd_optimize,
    "merge": cmd_merge,
    "render": cmd_render,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blocksplat", description="BlockSplat CLI Tool")
    parser.add_argument("--config", help="Pipeline config file (.toml or .json)")
    parser.add_argument("--log-level", default=None, help="Log level (default: $BLOCKSPLAT_LOG_LEVEL or INFO)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config value, e.g. train.iterations=200")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    subparsers.add_parser("partition", help="Partition the scene and assign views")

    optimize_parser = subparsers.add_parser("optimize", help="Optimize blocks")
    target = optimize_parser.add_mutually_exclusive_group()
    target.add_argument("--block", type=int, help="Optimize one block")
    target.add_argument("--all", action="store_true", help="Optimize every block (default)")
    optimize_parser.add_argument("--workers", type=int, help="Worker processes")

    subparsers.add_parser("merge", help="Merge optimized blocks")

    render_parser = subparsers.add_parser("render", help="Render the merged scene")
    render_parser.add_argument("--poses", help="JSON pose file (default: held-out views)")

    subparsers.add_parser("eval", help="Evaluate the merged scene on held-out views")

    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic scene")
    synth_parser.add_argument("--gaussians", type=int, default=150, help="Ground-truth Gaussians")
    synth_parser.add_argument("--views", type=int, default=24, help="Cameras on the ring")
    synth_parser.add_argument("--resolution", type=int, default=64, help="Image size in pixels")
    synth_parser.add_argument("--seed", type=int, default=0, help="Random seed")
    synth_parser.add_argument("--iterations", type=int, default=2000, help="Training iterations in the written config")
    synth_parser.add_argument("--out", required=True, help="Output directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    args.log_level = args.log_level or os.environ.get("BLOCKSPLAT_LOG_LEVEL", "INFO")
    setup_logging(args.log_level)

    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        with Timer() as timer:
            if args.command == "synth":
                code = cmd_synth(args)
            else:
                if not args.config:
                    raise ConfigurationError("--config is required for this command")
                if args.command == "optimize" and args.workers is not None and args.workers < 1:
                    raise ConfigurationError("--workers must be at least 1")
                try:
                    overrides = parse_overrides(args.overrides)
                except ValueError as e:
                    raise ConfigurationError(str(e))
                config = load_config(args.config, overrides)
                code = COMMANDS[args.command](config, args)
        logger.info(f"{args.command} finished in {timer.elapsed():.2f}s")
        return code
    except ConfigurationError as e:
        logger.error(str(e))
        print(f"❌ Error: {e}")
        return EXIT_USAGE
    except BlockSplatError as e:
        logger.error(f"{e.message} {e.details}" if e.details else e.message)
        print(f"❌ Error: {e.message}")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}")
        print(f"❌ Error: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
