"""Command-line entry point: ``biotune run|resume|report``.

Exit codes: 0 success, 2 configuration error, 3 trainer failure, 4 internal
error or interrupt. Log verbosity comes from the BIOTUNE_LOG_LEVEL
environment variable (DEBUG, INFO, WARNING, ...; default INFO).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import orchestrator
from .errors import (
    BioTuneError,
    CheckpointError,
    ConfigurationError,
    RunInterrupted,
    TrainerProcessError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINER = 3
EXIT_INTERNAL = 4

logger = logging.getLogger("biotune")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biotune",
        description=(
            "Evolutionary search over selective fine-tuning configurations: "
            "per-block freeze decisions and learning-rate multipliers."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a search described by a config file")
    p_run.add_argument("config", help="path to the YAML run config")

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    p_resume.add_argument("checkpoint", help="path to checkpoint.json from the run directory")

    p_report = sub.add_parser("report", help="summarize a finished run directory")
    p_report.add_argument("run_dir", help="output directory of a completed run")

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("BIOTUNE_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            out = orchestrator.run(args.config)
            print(f"run complete: {out}")
        elif args.command == "resume":
            out = orchestrator.resume(args.checkpoint)
            print(f"resume complete: {out}")
        else:
            print(orchestrator.report(args.run_dir))
        return EXIT_OK
    except (ConfigurationError, CheckpointError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except TrainerProcessError as exc:
        logger.error("trainer failure: %s", exc)
        return EXIT_TRAINER
    except RunInterrupted as exc:
        logger.error("%s", exc)
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        logger.error("interrupted; the last checkpoint in the run directory is resumable")
        return EXIT_INTERNAL
    except BioTuneError as exc:
        logger.error("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
