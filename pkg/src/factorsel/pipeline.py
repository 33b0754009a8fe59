"""End-to-end runs driven by a RunConfig.

A run labels the cohort, enumerates the (class pair × stratum) tasks, ranks
and selects features for every adequate task, re-evaluates each ranking with
the validation learners, runs the statistics battery, and writes every
artifact plus a manifest listing them.

Output layout::

    inventory.csv
    selection_summary.csv                   one row per task, plus pair averages
    validation_summary.csv
    stats_<name>.csv                        one per statistics entry
    tasks/<task>/ranking.csv
    tasks/<task>/auroc_curve.csv            AUROC per prefix size, selection learner
    tasks/<task>/selection.csv              chosen prefix against all features
    tasks/<task>/validation_<learner>.csv   AUROC per prefix size, one per validation learner
    tasks/<task>/pvalues.csv
    manifest.json
"""

import json
import logging
import shutil
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import metadata
from pathlib import Path

from joblib import Parallel, delayed

from factorsel.balance_rank import FeatureRanking, rank_features
from factorsel.battery import ranked_anova, run_entry
from factorsel.cohort import (
    LabeledCohort,
    RawTable,
    assign_labels,
    drop_incomplete,
    feature_columns,
    label_rows,
    load_table,
)
from factorsel.config import RunConfig, resolve_learners
from factorsel.errors import ConfigError, FactorSelError
from factorsel.report import (
    emit_report,
    inventory_table,
    selection_summary_table,
    selection_table,
    validation_summary_table,
)
from factorsel.strata import BinaryTask, InventoryRow, enumerate_tasks, task_inventory
from factorsel.subset_select import SelectionResult, select_features

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TASKS_DIR = "tasks"

# Errors that fail one task or one statistics entry without stopping the run.
TASK_ERRORS = (FactorSelError, ValueError, ArithmeticError)


class TaskStatus(Enum):
    """What happened to a task."""

    COMPLETED = "completed"
    SKIPPED = "skipped"
    ERROR = "error"


@dataclass(frozen=True)
class TaskRecord:
    """Manifest entry for one task.

    Attributes:
        task: directory-safe task identifier
        pair: class pair display name
        stratum: stratum display name
        n1: class1 rows
        n2: class2 rows
        adequate: the adequacy verdict
        status: outcome
        reason: why the task was skipped or failed
        iterations_run: ranking iterations
        stop_reason: why ranking stopped
        best_k: size of the selected prefix
        selected: selected feature names in rank order
        seconds: wall-clock duration when timing is recorded

    """

    task: str
    pair: str
    stratum: str
    n1: int
    n2: int
    adequate: bool
    status: TaskStatus
    reason: str | None = None
    iterations_run: int | None = None
    stop_reason: str | None = None
    best_k: int | None = None
    selected: tuple[str, ...] = ()
    seconds: float | None = None

    def to_dict(self) -> dict[str, object]:
        """Return a JSON-ready dictionary."""
        data: dict[str, object] = {
            "task": self.task,
            "pair": self.pair,
            "stratum": self.stratum,
            "n1": self.n1,
            "n2": self.n2,
            "adequate": self.adequate,
            "status": self.status.value,
            "reason": self.reason,
            "iterations_run": self.iterations_run,
            "stop_reason": self.stop_reason,
            "best_k": self.best_k,
            "selected": list(self.selected),
        }
        if self.seconds is not None:
            data["seconds"] = round(self.seconds, 3)
        return data


@dataclass(frozen=True)
class RunManifest:
    """Summary of a run and inventory of its artifacts.

    Attributes:
        config: echo of the run settings
        tasks: one record per enumerated task, in enumeration order
        statistics: status of each statistics entry ("ok" or the error)
        seeds: the master ranking seed and the evaluation seeds
        artifacts: every file written, as paths relative to the output
            directory, the manifest included
        version: factorsel version that produced the run
        timing: wall-clock durations, present only when requested

    """

    config: dict[str, object]
    tasks: tuple[TaskRecord, ...]
    statistics: dict[str, str]
    seeds: dict[str, object]
    artifacts: tuple[str, ...]
    version: str
    timing: dict[str, float] | None = None

    @property
    def n_errors(self) -> int:
        """Return the number of failed tasks and statistics entries."""
        failed_tasks = sum(r.status is TaskStatus.ERROR for r in self.tasks)
        failed_stats = sum(s != "ok" for s in self.statistics.values())
        return failed_tasks + failed_stats

    def to_dict(self) -> dict[str, object]:
        """Return a JSON-ready dictionary."""
        data: dict[str, object] = {
            "config": self.config,
            "tasks": [r.to_dict() for r in self.tasks],
            "statistics": self.statistics,
            "seeds": self.seeds,
            "artifacts": list(self.artifacts),
            "version": self.version,
        }
        if self.timing is not None:
            data["timing"] = self.timing
        return data


@dataclass(frozen=True)
class _TaskOutcome:
    record: TaskRecord
    selection: SelectionResult | None = None
    validations: tuple[SelectionResult, ...] = field(default=())


def software_version() -> str:
    """Return the installed factorsel version, or "unknown"."""
    try:
        return metadata.version("factorsel")
    except metadata.PackageNotFoundError:
        return "unknown"


def load_cohort(config: RunConfig) -> tuple[RawTable, LabeledCohort]:
    """Read, check and label the configured cohort.

    Rows missing a diagnostic, feature or strata value are dropped.

    Raises:
        FileNotFoundError: the cohort file does not exist
        TableParseError: the file is malformed
        SchemaError: the config references unknown or unusable columns

    """
    cohort = config.cohort
    table = load_table(cohort.path, cohort.schema, cohort.delimiter, cohort.missing_values)
    config.check_columns(table)
    features = feature_columns(
        table,
        config.label_rule,
        cohort.id_column,
        cohort.strata,
        cohort.exclude_columns,
    )
    scope = sorted(config.label_rule.columns()) + features + cohort.strata.names()
    complete = drop_incomplete(table, scope)
    if complete.n_rows < table.n_rows:
        logger.info(
            "Dropped %d of %d rows with missing values",
            table.n_rows - complete.n_rows,
            table.n_rows,
        )
    labeled = assign_labels(
        complete,
        config.label_rule,
        cohort.id_column,
        cohort.strata,
        cohort.exclude_columns,
    )
    return table, labeled


def build_inventory(
    config: RunConfig, cohort: LabeledCohort
) -> tuple[list[tuple[BinaryTask, bool]], list[InventoryRow]]:
    """Enumerate the configured tasks and summarize their class counts."""
    tasks = enumerate_tasks(cohort, config.pairs, config.strata, config.adequacy)
    return tasks, task_inventory(tasks, config.exclude_tasks)


def _prepare_output(config: RunConfig) -> Path:
    out = config.output_dir
    if out.exists() and any(out.iterdir()):
        if not config.overwrite:
            raise ConfigError(
                f"output directory {out} is not empty; set 'overwrite' to replace it"
            )
        logger.warning("Replacing the contents of %s", out)
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_task(task: BinaryTask, row: InventoryRow, config: RunConfig, out: Path) -> _TaskOutcome:
    """Rank, select and validate one task, and write its artifacts.

    Errors are caught and recorded; nothing is written for a failed task.
    """
    start = time.perf_counter()
    base = _record(row)
    logger.info("Task %s: n1=%d n2=%d m=%d", task, task.n1, task.n2, task.m)
    try:
        ranking: FeatureRanking = rank_features(task, config.ranking)
        selection = select_features(task, ranking, config.selection)
        validations = tuple(
            select_features(task, ranking, config.selection.with_classifier(spec))
            for spec in resolve_learners(config.validation, config.selection.classifier)
        )
        pvalues = ranked_anova(task, ranking)
    except TASK_ERRORS as e:
        logger.warning("Task %s failed: %s", task, e)
        return _TaskOutcome(
            replace(
                base,
                status=TaskStatus.ERROR,
                reason=f"{type(e).__name__}: {e}",
                seconds=time.perf_counter() - start if config.record_timing else None,
            )
        )

    task_dir = out / TASKS_DIR / row.slug
    task_dir.mkdir(parents=True, exist_ok=True)
    emit_report(ranking, task_dir / "ranking.csv")
    emit_report(selection, task_dir / "auroc_curve.csv")
    emit_report(selection_table(selection), task_dir / "selection.csv")
    for result in validations:
        emit_report(result, task_dir / f"validation_{result.learner}.csv")
    emit_report(pvalues, task_dir / "pvalues.csv")
    return _TaskOutcome(
        replace(
            base,
            status=TaskStatus.COMPLETED,
            iterations_run=ranking.iterations_run,
            stop_reason=ranking.stop_reason.value,
            best_k=selection.best_k,
            selected=selection.selected,
            seconds=time.perf_counter() - start if config.record_timing else None,
        ),
        selection,
        (selection,) + validations,
    )


def _record(row: InventoryRow) -> TaskRecord:
    return TaskRecord(
        task=row.slug,
        pair=row.pair,
        stratum=row.stratum,
        n1=row.n1,
        n2=row.n2,
        adequate=row.adequate,
        status=TaskStatus.SKIPPED,
    )


def _run_statistics(config: RunConfig, table: RawTable, out: Path) -> dict[str, str]:
    if not config.statistics:
        return {}
    labeled = drop_incomplete(table, sorted(config.label_rule.columns()))
    labels = label_rows(labeled, config.label_rule)
    status: dict[str, str] = {}
    for entry in config.statistics:
        try:
            result = run_entry(entry, labeled, labels)
        except TASK_ERRORS as e:
            logger.warning("statistics %s failed: %s", entry.name, e)
            status[entry.name] = f"error: {type(e).__name__}: {e}"
            continue
        emit_report(result, out / f"stats_{entry.name}.csv")
        status[entry.name] = "ok"
    return status


def _echo(config: RunConfig) -> dict[str, object]:
    # n_jobs never changes results and is not echoed.
    def strip(value: object) -> object:
        if isinstance(value, dict):
            return {k: strip(v) for k, v in value.items() if k != "n_jobs"}
        if isinstance(value, list):
            return [strip(v) for v in value]
        return value

    echo = strip(config.to_dict())
    assert isinstance(echo, dict)
    return echo


def run_pipeline(config: RunConfig) -> RunManifest:
    """Run every configured task and write all artifacts.

    Task failures are recorded in the manifest and do not stop the run.
    Identical configs and inputs give byte-identical output directories
    unless timing is recorded.

    Raises:
        ConfigError: the output directory is not empty and overwrite is off
        FileNotFoundError: the cohort file does not exist
        TableParseError: the cohort file is malformed
        SchemaError: the config references unknown or unusable columns
        OSError: artifacts cannot be written

    """
    start = time.perf_counter()
    table, cohort = load_cohort(config)
    tasks, inventory = build_inventory(config, cohort)
    out = _prepare_output(config)

    runnable = [(task, row) for (task, _), row in zip(tasks, inventory) if row.runnable]
    logger.info("%d of %d tasks to run", len(runnable), len(inventory))
    if config.n_jobs == 1:
        done = [run_task(task, row, config, out) for task, row in runnable]
    else:
        done = Parallel(n_jobs=config.n_jobs)(
            delayed(run_task)(task, row, config, out) for task, row in runnable
        )
    by_slug = {outcome.record.task: outcome for outcome in done}
    outcomes = [
        by_slug.get(row.slug)
        or _TaskOutcome(
            replace(_record(row), reason="excluded" if row.excluded else "inadequate")
        )
        for row in inventory
    ]

    completed = [
        (row, outcome)
        for row, outcome in zip(inventory, outcomes)
        if outcome.selection is not None
    ]
    emit_report(inventory_table(inventory), out / "inventory.csv")
    emit_report(
        selection_summary_table([(row, o.selection) for row, o in completed if o.selection]),
        out / "selection_summary.csv",
    )
    emit_report(
        validation_summary_table([(row, o.validations) for row, o in completed]),
        out / "validation_summary.csv",
    )
    statistics = _run_statistics(config, table, out)

    artifacts = sorted(
        [p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()]
        + [MANIFEST]
    )
    timing = (
        {"total_seconds": round(time.perf_counter() - start, 3)}
        if config.record_timing
        else None
    )
    manifest = RunManifest(
        config=_echo(config),
        tasks=tuple(o.record for o in outcomes),
        statistics=statistics,
        seeds={
            "master_seed": config.ranking.master_seed,
            "eval_seeds": list(config.selection.eval_seeds),
        },
        artifacts=tuple(artifacts),
        version=software_version(),
        timing=timing,
    )
    with open(out / MANIFEST, "w", encoding="utf-8", newline="") as f:
        f.write(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    logger.info(
        "Run finished: %d completed, %d errors, artifacts in %s",
        len(completed),
        manifest.n_errors,
        out,
    )
    return manifest
