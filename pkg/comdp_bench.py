"""
CoMDP Bench - Main Entry Point

Generates cooperative multi-agent MDPs, solves them with exact dynamic
programming or decentralized policy improvement with ALP evaluation, runs
benchmarks and checks the improvement bounds.
"""

import logging
import sys
from pathlib import Path

import structlog

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.commands import UsageError, apply_overrides, parse_args, run_command
from src.config import create_directories, load_config
from src.models import ComdpError


def setup_logging(config) -> None:
    """Setup structured logging configuration."""

    handlers = [logging.StreamHandler(sys.stdout)]
    if config.log_path:
        log_dir = Path(config.log_path)
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "comdp_bench.log")
        error_handler = logging.FileHandler(log_dir / "comdp_bench_errors.log")
        error_handler.setLevel(logging.ERROR)
        handlers.extend([file_handler, error_handler])

    logging.basicConfig(
        level=getattr(logging, config.log_level),
        format="%(message)s",
        handlers=handlers,
        force=True,
    )

    renderer = (
        structlog.processors.JSONRenderer()
        if config.log_json else structlog.processors.KeyValueRenderer(key_order=["event"])
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logger = structlog.get_logger(__name__)
    logger.debug("Logging configured successfully")


def main(argv=None) -> int:
    """Main entry point; returns the process exit code."""

    logger = None

    try:
        args = parse_args(argv)
        config = apply_overrides(load_config(args.config), args)
        create_directories(config)

        setup_logging(config)
        logger = structlog.get_logger(__name__)

        logger.info("=" * 60)
        logger.info("CoMDP Bench", command=args.command)
        logger.info("=" * 60)

        return run_command(args, config)

    except UsageError as e:
        if logger:
            logger.error("Usage error", error=str(e))
        print(f"Usage error: {e}", file=sys.stderr)
        return 2

    except ComdpError as e:
        if logger:
            logger.error("Fatal error", error=str(e), exc_info=True)
        else:
            print(f"Fatal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    # Check Python version
    if sys.version_info < (3, 8):
        print("Error: Python 3.8 or higher is required")
        sys.exit(1)

    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted.")
        sys.exit(1)
