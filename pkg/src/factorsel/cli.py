"""Command-line entry point.

::

    factorsel run CONFIG          run everything and write the artifacts
    factorsel validate CONFIG     check the config against the cohort file
    factorsel inventory CONFIG    write the task class-count table; the cohort,
                                  class pairs and strata come from CONFIG

Exit status is 0 on success, 2 for configuration or input errors, and 3
when a run finished with failed tasks or statistics entries.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from factorsel.config import RunConfig
from factorsel.errors import FactorSelError
from factorsel.pipeline import build_inventory, load_cohort, run_pipeline
from factorsel.report import emit_report, inventory_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorsel",
        description="Select discriminative risk factors for diagnostic class pairs.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="more log output (repeatable)"
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the full analysis")
    run.add_argument("config", type=Path, help="JSON run config")
    run.add_argument("-o", "--output-dir", type=Path, help="override the output directory")
    run.add_argument(
        "--overwrite", action="store_true", help="replace a non-empty output directory"
    )

    validate = commands.add_parser("validate", help="check a config and its cohort")
    validate.add_argument("config", type=Path, help="JSON run config")

    inventory = commands.add_parser(
        "inventory",
        help="write class counts for every (pair × stratum) task",
        description="Write the class counts of every task. The cohort file, class pairs "
        "and strata are read from the run config, not given on the command line.",
    )
    inventory.add_argument(
        "config", type=Path, help="JSON run config naming the cohort, pairs and strata"
    )
    inventory.add_argument(
        "-o", "--output", type=Path, help="CSV file to write (default: standard output)"
    )
    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load(path: Path, args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(path)
    changes: dict[str, object] = {}
    if getattr(args, "output_dir", None) is not None:
        changes["output_dir"] = args.output_dir.resolve()
    if getattr(args, "overwrite", False):
        changes["overwrite"] = True
    if changes:
        config = replace(config, **changes)  # type: ignore[arg-type]
    return config


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return the exit status."""
    args = _parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        config = _load(args.config, args)
        if args.command == "validate":
            _, cohort = load_cohort(config)
            _, rows = build_inventory(config, cohort)
            print(
                f"{args.config}: OK ({cohort.n} subjects, {cohort.m} features, "
                f"{sum(r.runnable for r in rows)} of {len(rows)} tasks runnable)"
            )
            return EXIT_OK
        if args.command == "inventory":
            _, cohort = load_cohort(config)
            _, rows = build_inventory(config, cohort)
            table = inventory_table(rows)
            if args.output is None:
                sys.stdout.write(table.to_csv(index=False, lineterminator="\n"))
            else:
                emit_report(table, args.output)
            return EXIT_OK
        manifest = run_pipeline(config)
    except (FactorSelError, OSError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    if manifest.n_errors:
        logger.error("%d tasks or statistics entries failed", manifest.n_errors)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
