"""Plot-ready result tables and their serialization.

Every result type converts to a pandas DataFrame through ``to_table``;
``emit_report`` writes such a table as CSV or JSON with fixed formatting, so
identical results always produce identical bytes.
"""

import json
import logging
import math
from enum import Enum
from functools import singledispatch
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from factorsel.balance_rank import FeatureRanking
from factorsel.infostats import LogitFit, TestResult
from factorsel.strata import InventoryRow
from factorsel.subset_select import SelectionResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6g"

TEST_RESULT_COLUMNS = ["test", "statistic", "dof", "dof2", "p_value", "degenerate"]
LOGIT_FIT_COLUMNS = [
    "term",
    "coefficient",
    "std_error",
    "odds_ratio",
    "ci_low",
    "ci_high",
    "wald_p",
    "llr",
    "llr_p",
    "converged",
]
INVENTORY_COLUMNS = ["pair", "stratum", "task", "n1", "n2", "total", "adequate", "excluded"]
SUMMARY_COLUMNS = [
    "pair",
    "stratum",
    "n1",
    "n2",
    "best_k",
    "selected",
    "auroc_fs",
    "auroc_nofs",
    "improvement_abs",
    "improvement_rel",
]
SELECTION_COLUMNS = [
    "learner",
    "best_k",
    "selected",
    "auroc_fs",
    "auroc_nofs",
    "improvement_abs",
    "improvement_rel",
]
VALIDATION_COLUMNS = [
    "pair",
    "stratum",
    "learner",
    "best_k",
    "auroc_fs",
    "auroc_nofs",
    "improvement_abs",
    "improvement_rel",
]

AVERAGE = "Average"


class ReportFormat(Enum):
    """Output file formats."""

    CSV = "csv"
    JSON = "json"


@singledispatch
def to_table(result: object) -> pd.DataFrame:
    """Convert a result object to a table.

    Raises:
        TypeError: the object has no tabular form

    """
    raise TypeError(f"No table form for {type(result).__name__}")


@to_table.register
def _(result: pd.DataFrame) -> pd.DataFrame:
    return result


@to_table.register
def _(result: FeatureRanking) -> pd.DataFrame:
    """One row per feature in rank order."""
    return pd.DataFrame(
        {
            "rank": np.arange(1, len(result.order) + 1),
            "feature": result.ranked_names(),
            "mean_mi": result.mean_scores[result.order],
        }
    )


@to_table.register
def _(result: SelectionResult) -> pd.DataFrame:
    """The AUROC curve: one row per prefix size with mean, sd and per-seed AUROC.

    The chosen prefix and its comparison with all features are in
    selection_table.
    """
    table = pd.DataFrame(
        {
            "k": result.ks,
            "feature_added": list(result.prefix_names) or [""] * len(result.ks),
            "mean_auroc": result.mean_auroc,
            "sd_auroc": result.sd_auroc,
        }
    )
    for i, seed in enumerate(result.eval_seeds):
        table[f"auroc_seed_{seed}"] = result.per_seed[:, i]
    return table


@to_table.register
def _(result: TestResult) -> pd.DataFrame:
    return _test_results([result])


@to_table.register
def _(result: LogitFit) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "term": list(result.names),
            "coefficient": result.coefficients,
            "std_error": result.standard_errors,
            "odds_ratio": result.odds_ratios,
            "ci_low": result.ci_low,
            "ci_high": result.ci_high,
            "wald_p": result.wald_p,
            "llr": result.llr_stat,
            "llr_p": result.llr_p,
            "converged": result.converged,
        },
        columns=LOGIT_FIT_COLUMNS,
    )


@to_table.register(list)
@to_table.register(tuple)
def _(result: Sequence[object]) -> pd.DataFrame:
    """Concatenate the tables of a set of results of one type.

    An empty set is an empty set of test results.
    """
    if not result:
        return pd.DataFrame(columns=TEST_RESULT_COLUMNS)
    if all(isinstance(r, TestResult) for r in result):
        return _test_results(result)  # type: ignore[arg-type]
    if all(isinstance(r, InventoryRow) for r in result):
        return inventory_table(result)  # type: ignore[arg-type]
    return pd.concat([to_table(r) for r in result], ignore_index=True)


def _test_results(results: Sequence[TestResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "test": r.kind.value,
                "statistic": r.statistic,
                "dof": r.dof,
                "dof2": math.nan if r.dof2 is None else r.dof2,
                "p_value": r.p_value,
                "degenerate": r.degenerate,
            }
            for r in results
        ],
        columns=TEST_RESULT_COLUMNS,
    )


def inventory_table(rows: Iterable[InventoryRow]) -> pd.DataFrame:
    """Return the class counts and adequacy of every task."""
    return pd.DataFrame(
        [
            {
                "pair": r.pair,
                "stratum": r.stratum,
                "task": r.slug,
                "n1": r.n1,
                "n2": r.n2,
                "total": r.n1 + r.n2,
                "adequate": r.adequate,
                "excluded": r.excluded,
            }
            for r in rows
        ],
        columns=INVENTORY_COLUMNS,
    )


def selected_text(names: Sequence[str]) -> str:
    """Return the numbered list of selected features, e.g. "1.age 2.apoe"."""
    return " ".join(f"{i}.{name}" for i, name in enumerate(names, start=1))


def _comparison(result: SelectionResult) -> dict[str, object]:
    return {
        "best_k": result.best_k,
        "auroc_fs": result.best_auroc,
        "auroc_nofs": result.baseline_auroc,
        "improvement_abs": result.improvement,
        "improvement_rel": result.relative_improvement,
    }


def _with_averages(table: pd.DataFrame, columns: list[str]) -> pd.DataFrame:
    # After each pair's strata, a row averaging its AUROCs.
    parts = []
    for pair in dict.fromkeys(table["pair"]):
        rows = table[table["pair"] == pair]
        parts.append(rows)
        fs = float(rows["auroc_fs"].mean())
        nofs = float(rows["auroc_nofs"].mean())
        average = {c: None for c in columns}
        average.update(
            {
                "pair": pair,
                "stratum": AVERAGE,
                "auroc_fs": fs,
                "auroc_nofs": nofs,
                "improvement_abs": fs - nofs,
                "improvement_rel": (fs - nofs) / nofs if nofs else math.nan,
            }
        )
        if "learner" in columns:
            average["learner"] = rows["learner"].iloc[0]
        parts.append(pd.DataFrame([average], columns=columns))
    return pd.concat(parts, ignore_index=True) if parts else table


def selection_table(result: SelectionResult) -> pd.DataFrame:
    """Return one row: the chosen prefix against all features for one learner."""
    return pd.DataFrame(
        [
            {
                "learner": result.learner,
                "selected": selected_text(result.selected),
                **_comparison(result),
            }
        ],
        columns=SELECTION_COLUMNS,
    )


def selection_summary_table(
    entries: Sequence[tuple[InventoryRow, SelectionResult]],
) -> pd.DataFrame:
    """Return the selected factors and AUROC with and without selection.

    Rows follow the given task order; each pair ends with an "Average" row.
    """
    table = pd.DataFrame(
        [
            {
                "pair": row.pair,
                "stratum": row.stratum,
                "n1": row.n1,
                "n2": row.n2,
                "selected": selected_text(result.selected),
                **_comparison(result),
            }
            for row, result in entries
        ],
        columns=SUMMARY_COLUMNS,
    )
    return _with_averages(table, SUMMARY_COLUMNS)


def validation_summary_table(
    entries: Sequence[tuple[InventoryRow, Sequence[SelectionResult]]],
) -> pd.DataFrame:
    """Compare learners task by task: best prefix size and AUROC with and without selection."""
    table = pd.DataFrame(
        [
            {"pair": row.pair, "stratum": row.stratum, "learner": r.learner, **_comparison(r)}
            for row, results in entries
            for r in results
        ],
        columns=VALIDATION_COLUMNS,
    )
    if table.empty:
        return table
    parts = [
        _with_averages(table[table["learner"] == learner], VALIDATION_COLUMNS)
        for learner in dict.fromkeys(table["learner"])
    ]
    return pd.concat(parts, ignore_index=True)


def _json_value(value: object) -> object:
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if not math.isfinite(number):
            return None
        return float(FLOAT_FORMAT % number)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def emit_report(
    result: object, path: str | Path, fmt: ReportFormat = ReportFormat.CSV
) -> Path:
    """Write a result as a table file.

    Floats are written with 6 significant digits and lines end with "\\n".
    Missing numbers are empty CSV cells or JSON nulls. An empty result
    writes only the header.

    Raises:
        OSError: the file cannot be written
        TypeError: the result has no tabular form

    Returns:
        The path written

    """
    path = Path(path)
    table = to_table(result)
    if fmt is ReportFormat.CSV:
        text = table.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    else:
        records = [
            {str(k): _json_value(v) for k, v in record.items()}
            for record in table.to_dict(orient="records")
        ]
        text = (
            json.dumps(
                {"columns": [str(c) for c in table.columns], "rows": records},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.debug("Wrote %s", path)
    return path
