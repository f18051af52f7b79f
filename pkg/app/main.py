"""Command-line entry point: ``python -m app.main {run,compare,validate-targets}``."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app.config import parse_layer_widths, settings
from app.logging_config import setup_logging
from models.enums import TargetMode
from models.errors import NumericalFailure, RankingError
from models.schemas import RunConfig
from services import pipeline, target

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _id_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relrank",
        description="Composite-index ranking: PCA relative attributes, clustering and a pairwise ranking network",
    )
    parser.add_argument("--log-dir", default=None, help="Also write rotating log files to this directory")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Score and rank one year of indicator data")
    run.add_argument("--data", required=True, help="Indicator CSV (entity_id,group,<indicators>)")
    run.add_argument("--schema", required=True, help="Indicator schema JSON")
    run.add_argument("--prev-state", default=None, help="Previous year's state.json (enables dynamic targets)")
    run.add_argument("--out", required=True, help="Output directory")
    run.add_argument("--year", default=None, help="Year label (default: data file name)")
    run.add_argument("--clusters", type=int, default=settings.CLUSTERS)
    run.add_argument("--restarts", type=int, default=settings.RESTARTS)
    run.add_argument("--variance-target", type=float, default=settings.VARIANCE_TARGET)
    run.add_argument("--hidden", default=settings.HIDDEN_LAYERS, help="Hidden layer widths, e.g. 10,10,10")
    run.add_argument("--epochs", type=int, default=settings.EPOCHS)
    run.add_argument("--loss-tolerance", type=float, default=settings.LOSS_TOLERANCE)
    run.add_argument("--seed", type=int, default=settings.SEED)
    run.add_argument("--exclude", type=_id_list, default=[], help="Comma separated ids left out of reports")
    run.add_argument("--static-targets", action="store_true",
                     help="Use first-year target rules even when --prev-state is given")
    run.add_argument("--checkpoint", default=None,
                     help="Score with a saved model.json instead of training a new network")

    cmp = sub.add_parser("compare", help="Compare two yearly states")
    cmp.add_argument("--current", required=True, help="Current state.json")
    cmp.add_argument("--previous", required=True, help="Previous state.json")
    cmp.add_argument("--reference", default=None, help="External ranking CSV (entity_id,rank[,score])")
    cmp.add_argument("--out", required=True, help="Output directory")
    cmp.add_argument("--exclude", type=_id_list, default=[], help="Comma separated ids left out of reports")

    val = sub.add_parser("validate-targets", help="Check a target-matrix CSV")
    val.add_argument("--targets", required=True, help="targets.csv written by 'run'")
    val.add_argument("--mode", choices=[mode.value for mode in TargetMode], default=None,
                     help="Rule set to validate against (default: inferred)")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = RunConfig(
            year_label=args.year or Path(args.data).stem,
            clusters=args.clusters,
            restarts=args.restarts,
            variance_target=args.variance_target,
            hidden_layers=parse_layer_widths(args.hidden),
            epochs=args.epochs,
            loss_tolerance=args.loss_tolerance,
            seed=args.seed,
            exclude=args.exclude,
            static_targets=args.static_targets,
        )
    except (ValidationError, ValueError) as e:
        logger.error(f"[CLI] ❌ Invalid run options: {e}")
        return EXIT_INPUT

    previous = None
    if args.prev_state:
        with pipeline.stage("previous-state"):
            previous = pipeline.YearState.load(args.prev_state)
    state = pipeline.run_year(
        args.data, args.schema, previous, cfg, out_dir=args.out, checkpoint=args.checkpoint
    )
    report = None
    if previous is not None:
        report = pipeline.compare(state, previous, exclude=cfg.exclude)
    pipeline.emit_reports(state, report, args.out, exclude=cfg.exclude)
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    current = pipeline.YearState.load(args.current)
    previous = pipeline.YearState.load(args.previous)
    report = pipeline.compare(current, previous, args.reference, exclude=args.exclude)
    pipeline.emit_reports(current, report, args.out, exclude=args.exclude)
    return EXIT_OK


def _cmd_validate_targets(args: argparse.Namespace) -> int:
    mode = TargetMode(args.mode) if args.mode else None
    matrix = target.read_targets_csv(args.targets, mode=mode)
    violations = target.validate(matrix)
    if violations:
        for violation in violations:
            print(violation)
        logger.error(f"[CLI] ❌ {len(violations)} violation(s) in {args.targets} ({matrix.mode.value} mode)")
        return EXIT_INPUT
    logger.info(f"[CLI] ✅ {args.targets} is a valid {matrix.mode.value} target matrix")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "validate-targets": _cmd_validate_targets,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, dispatch the subcommand and map failures to exit codes.

    Exit codes: 0 success, 1 input/validation error, 2 numerical failure.
    """
    args = build_parser().parse_args(argv)
    setup_logging(log_dir=args.log_dir, to_file=bool(args.log_dir) or None)
    try:
        return COMMANDS[args.command](args)
    except NumericalFailure as e:
        logger.error(f"[CLI] ❌ Numerical failure: {e}")
        return EXIT_NUMERICAL
    except RankingError as e:
        logger.error(f"[CLI] ❌ {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
