"""Statistical battery over labeled subjects.

Each configured entry runs one kind of analysis (ANOVA, chi-square, logistic
regression or descriptive statistics) on some variables for one or more
class scenarios, optionally restricted by a filter expression. Results come
back as long-form tables with a status column, so that a failed fit is
reported in place instead of aborting the run.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
import pyparsing as pp

from factorsel.balance_rank import FeatureRanking
from factorsel.cohort import ColumnKind, Label, RawTable
from factorsel.errors import ConfigError, FactorSelError, SchemaError
from factorsel.infostats import (
    anova_oneway,
    chi2_independence,
    contingency_table,
    describe_groups,
    logit_fit,
)
from factorsel.label_rule import Predicate, check_columns, parse_expression
from factorsel.strata import BinaryTask

logger = logging.getLogger(__name__)

Scenario = tuple[Label, ...]

STATUS_OK = "ok"
INTERCEPT = "(intercept)"
# The "against" cell of chi-square rows that test a variable against the class.
CLASS_AGAINST = "(class)"

ANOVA_COLUMNS = ["scenario", "variable", "n", "f_statistic", "dof", "dof2", "p_value", "status"]
CHI2_COLUMNS = ["scenario", "variable", "against", "n", "chi2", "dof", "p_value", "status"]
LOGIT_COLUMNS = [
    "scenario",
    "term",
    "n",
    "coefficient",
    "std_error",
    "odds_ratio",
    "ci_low",
    "ci_high",
    "wald_p",
    "llr",
    "llr_p",
    "converged",
    "status",
]
DESCRIBE_COLUMNS = ["scenario", "variable", "group", "n", "mean", "sd", "status"]
PVALUE_COLUMNS = ["rank", "feature", "f_statistic", "p_value"]


class StatisticKind(Enum):
    """The analyses a battery entry can run."""

    ANOVA = "anova"
    CHI2 = "chi2"
    LOGIT = "logit"
    DESCRIBE = "describe"

    @property
    def columns(self) -> list[str]:
        """Return the columns of this kind's result table."""
        return {
            StatisticKind.ANOVA: ANOVA_COLUMNS,
            StatisticKind.CHI2: CHI2_COLUMNS,
            StatisticKind.LOGIT: LOGIT_COLUMNS,
            StatisticKind.DESCRIBE: DESCRIBE_COLUMNS,
        }[self]


def scenario_name(scenario: Scenario) -> str:
    """Return e.g. "LATE vs AD" or "Control"."""
    return " vs ".join(label.display for label in scenario)


@dataclass(frozen=True)
class StatisticsEntry:
    """One analysis of the battery.

    Attributes:
        name: identifies the entry and its output file
        kind: the analysis
        variables: columns analyzed; for LOGIT, the model's covariates
        scenarios: class groups compared. ANOVA, CHI2 and DESCRIBE take one
            or more classes per scenario; LOGIT takes exactly two and models
            the first as the positive outcome
        where: optional filter expression selecting a subpopulation
        against: CHI2 only; cross each variable with this column inside every
            scenario instead of with the class. Scenarios may then hold a
            single class

    """

    name: str
    kind: StatisticKind
    variables: tuple[str, ...]
    scenarios: tuple[Scenario, ...]
    where: str | None = None
    against: str | None = None

    def __post_init__(self) -> None:
        """Validate the entry."""
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(
            self, "scenarios", tuple(tuple(s) for s in self.scenarios)
        )
        if not self.name or not self.name.replace("-", "").replace("_", "").isalnum():
            raise ConfigError(
                f"statistics name {self.name!r} must use letters, digits, '-' or '_'"
            )
        if not self.variables or not self.scenarios:
            raise ConfigError(f"statistics {self.name!r} needs variables and scenarios")
        for scenario in self.scenarios:
            if len(set(scenario)) != len(scenario):
                raise ConfigError(f"statistics {self.name!r} repeats a class")
            if self.kind is StatisticKind.LOGIT and len(scenario) != 2:
                raise ConfigError("logit scenarios must name exactly two classes")
            if self.kind is StatisticKind.ANOVA and len(scenario) < 2:
                raise ConfigError("anova scenarios need two or more classes")
            if self.kind is StatisticKind.CHI2 and self.against is None and len(scenario) < 2:
                raise ConfigError("chi2 scenarios need two or more classes")
        if self.against is not None:
            if self.kind is not StatisticKind.CHI2:
                raise ConfigError(f"statistics {self.name!r}: only chi2 takes 'against'")
            if self.against in self.variables:
                raise ConfigError(
                    f"statistics {self.name!r}: {self.against!r} is crossed with itself"
                )
        if self.where is not None:
            self.filter_predicate()

    def filter_predicate(self) -> Predicate | None:
        """Return the parsed filter, if any.

        Raises:
            ConfigError: the filter is not a valid expression

        """
        if self.where is None:
            return None
        try:
            return parse_expression(self.where)
        except pp.ParseException as e:
            raise ConfigError(f"statistics {self.name!r}: bad filter: {e}") from None

    def columns(self) -> set[str]:
        """Return every column the entry reads."""
        used = set(self.variables)
        if self.against is not None:
            used.add(self.against)
        predicate = self.filter_predicate()
        if predicate is not None:
            used |= predicate.columns()
        return used

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "StatisticsEntry":
        """Create an instance from a dictionary.

        Scenarios are lists of class names, or a single class name.

        Raises:
            ConfigError: a key is missing or malformed

        """
        name = data.get("name")
        kind = data.get("kind")
        variables = data.get("variables")
        scenarios = data.get("scenarios")
        where = data.get("where")
        against = data.get("against")
        if not isinstance(name, str) or not isinstance(kind, str):
            raise ConfigError("statistics entries need string 'name' and 'kind'")
        if not isinstance(variables, list) or not all(
            isinstance(v, str) for v in variables
        ):
            raise ConfigError(f"statistics {name!r}: 'variables' must list column names")
        if not isinstance(scenarios, list):
            raise ConfigError(f"statistics {name!r}: 'scenarios' must be a list")
        if where is not None and not isinstance(where, str):
            raise ConfigError(f"statistics {name!r}: 'where' must be a string")
        if against is not None and not isinstance(against, str):
            raise ConfigError(f"statistics {name!r}: 'against' must be a column name")
        try:
            statistic = StatisticKind(kind.lower())
            parsed = [
                (Label.parse(s),)
                if isinstance(s, str)
                else tuple(Label.parse(str(c)) for c in s)
                for s in scenarios
            ]
        except ValueError as e:
            raise ConfigError(f"statistics {name!r}: {e}") from None
        return cls(name, statistic, tuple(variables), tuple(parsed), where, against)


def check_entry(entry: StatisticsEntry, table: RawTable) -> None:
    """Raise SchemaError if the entry cannot run on the table's columns."""
    read = set(entry.variables) | ({entry.against} if entry.against else set())
    missing = sorted(read - set(table.column_names))
    if missing:
        raise SchemaError(f"statistics {entry.name!r}: unknown columns {missing}")
    predicate = entry.filter_predicate()
    if predicate is not None:
        check_columns(predicate, table.column_names)
    if entry.kind is not StatisticKind.CHI2:
        text = [v for v in entry.variables if table.schema[v].kind is ColumnKind.TEXT]
        if text:
            raise SchemaError(
                f"statistics {entry.name!r}: text columns {text} are not numeric"
            )


def _rows_for(
    entry: StatisticsEntry,
    table: RawTable,
    labels: npt.NDArray[np.int8],
    scenario: Scenario,
) -> npt.NDArray[np.bool_]:
    mask = np.isin(labels, [int(c) for c in scenario])
    scoped = sorted(entry.columns())
    mask &= ~table.missing_mask[scoped].to_numpy().any(axis=1)
    predicate = entry.filter_predicate()
    if predicate is not None:
        mask &= predicate.evaluate(table)
    return mask


def _failure(columns: list[str], values: dict[str, object], error: Exception) -> dict[str, object]:
    row: dict[str, object] = {c: math.nan for c in columns}
    row.update(values)
    row["status"] = f"error: {type(error).__name__}: {error}"
    return row


def _anova_rows(
    entry: StatisticsEntry, table: RawTable, labels: npt.NDArray[np.int8], scenario: Scenario
) -> list[dict[str, object]]:
    mask = _rows_for(entry, table, labels, scenario)
    rows = []
    for variable in entry.variables:
        values = table.column(variable).astype(float)[mask]
        codes = labels[mask]
        base = {"scenario": scenario_name(scenario), "variable": variable, "n": int(mask.sum())}
        try:
            result = anova_oneway([values[codes == c] for c in scenario])
        except (FactorSelError, ValueError, ArithmeticError) as e:
            rows.append(_failure(ANOVA_COLUMNS, base, e))
            continue
        rows.append(
            {
                **base,
                "f_statistic": result.statistic,
                "dof": result.dof,
                "dof2": result.dof2,
                "p_value": result.p_value,
                "status": STATUS_OK,
            }
        )
    return rows


def _chi2_rows(
    entry: StatisticsEntry, table: RawTable, labels: npt.NDArray[np.int8], scenario: Scenario
) -> list[dict[str, object]]:
    mask = _rows_for(entry, table, labels, scenario)
    groups = labels[mask] if entry.against is None else table.column(entry.against)[mask]
    rows = []
    for variable in entry.variables:
        values = table.column(variable)[mask]
        base = {
            "scenario": scenario_name(scenario),
            "variable": variable,
            "against": entry.against or CLASS_AGAINST,
            "n": int(mask.sum()),
        }
        try:
            result = chi2_independence(contingency_table(values, groups))
        except (FactorSelError, ValueError, ArithmeticError) as e:
            rows.append(_failure(CHI2_COLUMNS, base, e))
            continue
        rows.append(
            {
                **base,
                "chi2": result.statistic,
                "dof": result.dof,
                "p_value": result.p_value,
                "status": STATUS_OK,
            }
        )
    return rows


def _logit_rows(
    entry: StatisticsEntry, table: RawTable, labels: npt.NDArray[np.int8], scenario: Scenario
) -> list[dict[str, object]]:
    mask = _rows_for(entry, table, labels, scenario)
    covariates = table.frame.loc[mask, list(entry.variables)].to_numpy(dtype=float)
    X = np.column_stack([np.ones(len(covariates)), covariates])
    y = (labels[mask] == scenario[0]).astype(float)
    name = scenario_name(scenario)
    try:
        fit = logit_fit(X, y, names=[INTERCEPT, *entry.variables])
    except (FactorSelError, ValueError, ArithmeticError) as e:
        logger.warning("statistics %s [%s]: %s", entry.name, name, e)
        return [
            _failure(LOGIT_COLUMNS, {"scenario": name, "term": term, "n": int(mask.sum())}, e)
            for term in (INTERCEPT, *entry.variables)
        ]
    return [
        {
            "scenario": name,
            "term": fit.names[i],
            "n": int(mask.sum()),
            "coefficient": fit.coefficients[i],
            "std_error": fit.standard_errors[i],
            "odds_ratio": fit.odds_ratios[i],
            "ci_low": fit.ci_low[i],
            "ci_high": fit.ci_high[i],
            "wald_p": fit.wald_p[i],
            "llr": fit.llr_stat,
            "llr_p": fit.llr_p,
            "converged": fit.converged,
            "status": STATUS_OK,
        }
        for i in range(len(fit.names))
    ]


def _describe_rows(
    entry: StatisticsEntry, table: RawTable, labels: npt.NDArray[np.int8], scenario: Scenario
) -> list[dict[str, object]]:
    mask = _rows_for(entry, table, labels, scenario)
    names = {int(label): label.display for label in Label}
    rows: list[dict[str, object]] = []
    for variable in entry.variables:
        values = table.column(variable).astype(float)[mask]
        summaries = {
            s.group: s for s in describe_groups(values, labels[mask], names)
        }
        for label in scenario:
            summary = summaries.get(label.display)
            rows.append(
                {
                    "scenario": scenario_name(scenario),
                    "variable": variable,
                    "group": label.display,
                    "n": summary.n if summary else 0,
                    "mean": summary.mean if summary else math.nan,
                    "sd": summary.sd if summary else math.nan,
                    "status": STATUS_OK,
                }
            )
    return rows


_RUNNERS = {
    StatisticKind.ANOVA: _anova_rows,
    StatisticKind.CHI2: _chi2_rows,
    StatisticKind.LOGIT: _logit_rows,
    StatisticKind.DESCRIBE: _describe_rows,
}


def run_entry(
    entry: StatisticsEntry, table: RawTable, labels: npt.NDArray[np.int8]
) -> pd.DataFrame:
    """Run one battery entry over labeled rows.

    Rows missing any value the entry reads are dropped for this entry only.
    Analysis failures become rows whose status starts with "error:" and whose
    numeric cells are empty.

    Raises:
        SchemaError: the entry names unknown or unusable columns
        ValueError: labels do not match the table

    """
    if len(labels) != table.n_rows:
        raise ValueError("one label per table row is required")
    check_entry(entry, table)
    rows: list[dict[str, object]] = []
    for scenario in entry.scenarios:
        rows.extend(_RUNNERS[entry.kind](entry, table, labels, scenario))
    logger.info("statistics %s: %d result rows", entry.name, len(rows))
    return pd.DataFrame(rows, columns=entry.kind.columns)


def ranked_anova(task: BinaryTask, ranking: FeatureRanking) -> pd.DataFrame:
    """Return the ANOVA p-value of each ranked feature between the task's classes.

    Features appear in rank order, so the p-values trace how significance
    falls off along the ranking.
    """
    records = []
    for rank, j in enumerate(ranking.order, start=1):
        column = task.X[:, j]
        result = anova_oneway([column[task.y == 1], column[task.y == 0]])
        records.append(
            {
                "rank": rank,
                "feature": task.feature_names[j],
                "f_statistic": result.statistic,
                "p_value": result.p_value,
            }
        )
    return pd.DataFrame(records, columns=PVALUE_COLUMNS)


def check_unique_names(entries: Sequence[StatisticsEntry]) -> None:
    """Raise ConfigError if two entries share a name."""
    seen: set[str] = set()
    for entry in entries:
        if entry.name in seen:
            raise ConfigError(f"duplicate statistics name: {entry.name!r}")
        seen.add(entry.name)
