"""Ingest delimited cohort tables and label subjects.

A cohort file is read into a RawTable whose cells are typed according to a
schema and flagged when missing. Incomplete rows are dropped, never imputed.
assign_labels then applies a LabelRule to place every subject in one of four
diagnostic classes and produces the immutable LabeledCohort used by the rest
of the pipeline.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd

from factorsel.errors import (
    IncompleteDataError,
    SchemaError,
    TableParseError,
)
from factorsel.label_rule import LabelRule, Literal, check_columns

logger = logging.getLogger(__name__)

DEFAULT_MISSING = ("", "NA", "NaN")


class Label(IntEnum):
    """The four diagnostic classes."""

    LATE_AD = 0
    LATE = 1
    AD = 2
    CONTROL = 3

    @property
    def display(self) -> str:
        """Return the conventional display name, e.g. "LATE+AD"."""
        return _DISPLAY[self]

    @classmethod
    def parse(cls, text: str) -> "Label":
        """Parse a label from its name or display name (case-insensitive).

        Raises:
            ValueError: text names no label

        """
        key = text.strip().upper().replace("+", "_").replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"Unknown label: {text!r}") from None


_DISPLAY = {
    Label.LATE_AD: "LATE+AD",
    Label.LATE: "LATE",
    Label.AD: "AD",
    Label.CONTROL: "Control",
}


class ColumnKind(Enum):
    """How the cells of a column are typed."""

    REAL = "real"
    INTEGER = "integer"
    CATEGORICAL = "categorical"
    TEXT = "text"


@dataclass(frozen=True)
class ColumnType:
    """The type of one column.

    Attributes:
        kind: cell type
        categories: for CATEGORICAL columns, maps each category's text to its
            integer code

    """

    kind: ColumnKind
    categories: Mapping[str, int] = field(default_factory=dict)

    @property
    def is_numeric(self) -> bool:
        """Return True if the column is stored as floats."""
        return self.kind is not ColumnKind.TEXT

    @classmethod
    def from_value(cls, value: object) -> "ColumnType":
        """Create an instance from a schema entry.

        Args:
            value: one of "real", "integer", "text"; a list of category names
                (coded 0, 1, ... in order); or ``{"categorical": {name: code}}``

        Raises:
            SchemaError: value is not a recognized type

        """
        if isinstance(value, str):
            try:
                kind = ColumnKind(value.lower())
            except ValueError:
                raise SchemaError(f"Unknown column type: {value!r}") from None
            if kind is ColumnKind.CATEGORICAL:
                raise SchemaError("categorical columns need their category codes")
            return cls(kind)
        if isinstance(value, list):
            return cls(ColumnKind.CATEGORICAL, {str(v): i for i, v in enumerate(value)})
        if isinstance(value, dict) and isinstance(value.get("categorical"), dict):
            codes = value["categorical"]
            return cls(ColumnKind.CATEGORICAL, {str(k): int(v) for k, v in codes.items()})
        raise SchemaError(f"Unknown column type: {value!r}")

    def decode(self, code: float) -> str:
        """Return the category text for a code, or the number as text."""
        for name, value in self.categories.items():
            if value == code:
                return name
        return f"{code:g}"

    def convert(
        self,
        cells: Sequence[str],
        missing: npt.NDArray[np.bool_],
        name: str,
        row_numbers: Sequence[int] | None = None,
    ) -> pd.Series:
        """Convert raw cell text to typed values.

        Missing cells become NaN (numeric kinds) or "" (text). Errors report
        row_numbers[i] for cell i when given, i + 1 otherwise.

        Raises:
            TableParseError: a non-missing cell cannot be converted

        """
        if self.kind is ColumnKind.TEXT:
            return pd.Series(
                ["" if m else c for c, m in zip(cells, missing)], dtype=object
            )
        numbers: Sequence[int] = (
            row_numbers if row_numbers is not None else range(1, len(cells) + 1)
        )
        values = np.full(len(cells), np.nan)
        for i, (cell, is_missing) in enumerate(zip(cells, missing)):
            if is_missing:
                continue
            text = cell.strip()
            if self.kind is ColumnKind.CATEGORICAL:
                if text not in self.categories:
                    raise TableParseError(
                        f"unknown category {text!r} in column {name!r}", numbers[i]
                    )
                values[i] = self.categories[text]
                continue
            try:
                number = float(text)
            except ValueError:
                raise TableParseError(
                    f"cannot read {text!r} in column {name!r} as a number", numbers[i]
                ) from None
            if self.kind is ColumnKind.INTEGER and not (
                math.isfinite(number) and number.is_integer()
            ):
                raise TableParseError(
                    f"{text!r} in column {name!r} is not an integer", numbers[i]
                )
            values[i] = number
        return pd.Series(values, dtype=float)


@dataclass(frozen=True)
class RawTable:
    """A rectangular table of typed cells with per-cell missing flags.

    Attributes:
        frame: one column per schema column, numeric kinds as float64 with NaN
            for missing cells and text as str with "" for missing cells
        missing_mask: boolean frame of the same shape, True where missing
        schema: the type of every column

    """

    frame: pd.DataFrame
    missing_mask: pd.DataFrame
    schema: Mapping[str, ColumnType]

    def __post_init__(self) -> None:
        """Check the table's structural invariants."""
        names = list(self.frame.columns)
        if len(set(names)) != len(names) or any(not str(n) for n in names):
            raise SchemaError("column names must be unique and non-empty")
        if list(self.missing_mask.columns) != names or len(self.missing_mask) != len(
            self.frame
        ):
            raise SchemaError("missing mask does not match the table")
        unknown = set(names) - set(self.schema)
        if unknown:
            raise SchemaError(f"columns without a type: {sorted(unknown)}")

    @property
    def column_names(self) -> list[str]:
        """Return the column names in file order."""
        return [str(n) for n in self.frame.columns]

    @property
    def n_rows(self) -> int:
        """Return the number of rows."""
        return len(self.frame)

    def column(self, name: str) -> npt.NDArray[np.generic]:
        """Return a column's values as an array.

        Raises:
            SchemaError: no such column

        """
        if name not in self.frame.columns:
            raise SchemaError(f"Unknown column: {name!r}")
        return self.frame[name].to_numpy()

    def encode_literal(self, name: str, literal: Literal) -> Literal:
        """Translate an expression constant into a column's representation.

        Category names are translated to their codes, so a rule may compare a
        categorical column with either.

        Raises:
            SchemaError: the constant cannot be compared with the column

        """
        column_type = self.schema[name]
        if column_type.kind is ColumnKind.TEXT:
            if not isinstance(literal, str):
                raise SchemaError(f"text column {name!r} compared with a number")
            return literal
        if isinstance(literal, str):
            if literal in column_type.categories:
                return float(column_type.categories[literal])
            try:
                return float(literal)
            except ValueError:
                raise SchemaError(
                    f"column {name!r} has no category {literal!r}"
                ) from None
        return literal

    def take(self, rows: npt.NDArray[np.bool_] | npt.NDArray[np.intp]) -> "RawTable":
        """Return a table with the selected rows, in order."""
        frame = self.frame.loc[rows] if rows.dtype == bool else self.frame.iloc[rows]
        mask = (
            self.missing_mask.loc[rows]
            if rows.dtype == bool
            else self.missing_mask.iloc[rows]
        )
        return RawTable(
            frame.reset_index(drop=True), mask.reset_index(drop=True), self.schema
        )


@dataclass(frozen=True)
class StrataColumns:
    """Names of the columns holding the stratification attributes.

    Any of them may be None when the cohort lacks that attribute; strata that
    need it then cannot be used.
    """

    sex: str | None = None
    race: str | None = None
    age: str | None = None

    def names(self) -> list[str]:
        """Return the configured column names."""
        return [n for n in (self.sex, self.race, self.age) if n is not None]


def _frozen(array: npt.ArrayLike, dtype: npt.DTypeLike = None) -> npt.NDArray[np.generic]:
    result = np.array(array, dtype=dtype, copy=True)
    result.flags.writeable = False
    return result


@dataclass(frozen=True)
class LabeledCohort:
    """Subjects with a complete real-valued feature matrix and a class label.

    Instances are immutable: their arrays are read-only.

    Attributes:
        features: n × m feature matrix
        feature_names: m feature names
        labels: per-row Label codes
        sex: per-row sex (text; "" if the cohort has no sex column)
        race: per-row race (text; "" if absent)
        age: per-row age in years (NaN if absent)
        ids: per-row subject identifiers (row numbers if no ID column)

    """

    features: npt.NDArray[np.float64]
    feature_names: tuple[str, ...]
    labels: npt.NDArray[np.int8]
    sex: npt.NDArray[np.object_]
    race: npt.NDArray[np.object_]
    age: npt.NDArray[np.float64]
    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        """Freeze arrays and check invariants."""
        features = _frozen(self.features, float)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", _frozen(self.labels, np.int8))
        object.__setattr__(self, "sex", _frozen(self.sex, object))
        object.__setattr__(self, "race", _frozen(self.race, object))
        object.__setattr__(self, "age", _frozen(self.age, float))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "ids", tuple(self.ids))
        n = len(self.labels)
        if features.shape != (n, len(self.feature_names)):
            raise SchemaError("feature matrix does not match labels and names")
        if not all(len(a) == n for a in (self.sex, self.race, self.age, self.ids)):
            raise SchemaError("strata attributes do not match labels")
        if np.isnan(features).any():
            raise IncompleteDataError("a LabeledCohort cannot contain missing values")
        if n and not np.isin(self.labels, [label.value for label in Label]).all():
            raise ValueError("labels must be Label codes")

    @property
    def n(self) -> int:
        """Return the number of subjects."""
        return len(self.labels)

    @property
    def m(self) -> int:
        """Return the number of features."""
        return len(self.feature_names)

    def class_counts(self) -> dict[Label, int]:
        """Return the number of subjects in each class."""
        counts = np.bincount(self.labels.astype(np.intp), minlength=len(Label))
        return {label: int(counts[label]) for label in Label}


def load_table(
    path: str | Path,
    schema: Mapping[str, object],
    delimiter: str = ",",
    missing_values: Iterable[str] = DEFAULT_MISSING,
) -> RawTable:
    """Read a delimited text file with a header row.

    Args:
        path: file to read
        schema: maps column names to types (see ColumnType.from_value);
            columns not named default to "real"
        delimiter: field separator
        missing_values: cell texts (after stripping whitespace) that mark a
            missing value

    Raises:
        FileNotFoundError: path does not exist
        TableParseError: a row has the wrong number of fields, or a cell
            cannot be converted to its column's type
        SchemaError: the schema names a column not in the header

    Returns:
        The parsed table

    """
    sentinels = {s.strip() for s in missing_values}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError("file has no header row", 0) from None
        rows: list[list[str]] = []
        # File line of each kept row, counted from the header line as 0.
        numbers: list[int] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise TableParseError(
                    f"expected {len(header)} fields, found {len(row)}",
                    reader.line_num - 1,
                )
            rows.append(row)
            numbers.append(reader.line_num - 1)

    header = [h.strip() for h in header]
    unknown = sorted(set(schema) - set(header))
    if unknown:
        raise SchemaError(f"schema names columns not in the file: {unknown}")
    types = {
        name: ColumnType.from_value(schema.get(name, "real")) for name in header
    }
    if len(set(header)) != len(header) or any(not h for h in header):
        raise SchemaError("column names must be unique and non-empty")

    data: dict[str, pd.Series] = {}
    mask: dict[str, npt.NDArray[np.bool_]] = {}
    for j, name in enumerate(header):
        cells = [row[j] for row in rows]
        missing = np.array([c.strip() in sentinels for c in cells], dtype=bool)
        data[name] = types[name].convert(cells, missing, name, numbers)
        mask[name] = missing
    frame = pd.DataFrame(data, columns=header)
    missing_mask = pd.DataFrame(mask, columns=header, dtype=bool)
    logger.info(
        "Loaded %d rows × %d columns from %s (%d missing cells)",
        len(frame),
        len(header),
        path,
        int(missing_mask.to_numpy().sum()),
    )
    return RawTable(frame, missing_mask, types)


def drop_incomplete(table: RawTable, scope: Iterable[str]) -> RawTable:
    """Keep only rows with no missing value in any scoped column.

    Row order is preserved. Dropping every row is not an error.

    Raises:
        SchemaError: scope names a column not in the table

    """
    scope = list(scope)
    unknown = sorted(set(scope) - set(table.column_names))
    if unknown:
        raise SchemaError(f"Unknown columns: {unknown}")
    keep = ~table.missing_mask[scope].to_numpy().any(axis=1)
    if keep.all():
        return table
    logger.debug("Dropping %d incomplete rows", int((~keep).sum()))
    return table.take(keep)


def label_rows(table: RawTable, rule: LabelRule) -> npt.NDArray[np.int8]:
    """Apply a LabelRule to every row of a table.

    Raises:
        SchemaError: the rule references a column not in the table
        IncompleteDataError: a diagnostic column has missing values

    Returns:
        Per-row Label codes

    """
    check_columns(rule.ad_predicate, table.column_names)
    check_columns(rule.late_predicate, table.column_names)
    diagnostic = sorted(rule.columns())
    if table.missing_mask[diagnostic].to_numpy().any():
        raise IncompleteDataError(
            "diagnostic columns have missing values; run drop_incomplete first"
        )
    ad = rule.ad_predicate.evaluate(table)
    late = rule.late_predicate.evaluate(table)
    labels = np.full(table.n_rows, Label.CONTROL, dtype=np.int8)
    labels[ad & ~late] = Label.AD
    labels[late & ~ad] = Label.LATE
    labels[ad & late] = Label.LATE_AD
    return labels


def feature_columns(
    table: RawTable,
    rule: LabelRule,
    id_column: str | None = None,
    strata: StrataColumns = StrataColumns(),
    exclude: Iterable[str] = (),
) -> list[str]:
    """Return the columns that become features, in file order.

    Features are the numeric columns other than the ID, diagnostic, strata
    and excluded columns.
    """
    skipped = set(rule.columns()) | set(strata.names()) | set(exclude)
    if id_column is not None:
        skipped.add(id_column)
    names = []
    for name in table.column_names:
        if name in skipped:
            continue
        if not table.schema[name].is_numeric:
            logger.debug("Text column %r is not used as a feature", name)
            continue
        names.append(name)
    return names


def _strata_text(table: RawTable, name: str | None) -> list[str]:
    if name is None:
        return [""] * table.n_rows
    column_type = table.schema[name]
    values = table.column(name)
    if column_type.kind is ColumnKind.TEXT:
        return [str(v) for v in values]
    return [column_type.decode(float(v)) for v in values]


def assign_labels(
    table: RawTable,
    rule: LabelRule,
    id_column: str | None = None,
    strata: StrataColumns = StrataColumns(),
    exclude: Iterable[str] = (),
) -> LabeledCohort:
    """Label every subject and build the cohort's feature matrix.

    A subject is LATE_AD if both predicates hold, LATE or AD if only that
    predicate holds, and CONTROL otherwise. ID, diagnostic, strata and
    excluded columns are not features.

    Raises:
        SchemaError: the rule, ID or strata settings name unknown columns, or
            the age column is not numeric
        IncompleteDataError: a used column has missing values

    """
    exclude = list(exclude)
    referenced = strata.names() + exclude + ([id_column] if id_column else [])
    unknown = sorted(set(referenced) - set(table.column_names))
    if unknown:
        raise SchemaError(f"Unknown columns: {unknown}")
    labels = label_rows(table, rule)
    names = feature_columns(table, rule, id_column, strata, exclude)
    used = names + strata.names()
    if table.missing_mask[used].to_numpy().any():
        raise IncompleteDataError(
            "feature or strata columns have missing values; run drop_incomplete first"
        )
    if strata.age is not None and not table.schema[strata.age].is_numeric:
        raise SchemaError(f"age column {strata.age!r} must be numeric")

    features = (
        table.frame[names].to_numpy(dtype=float)
        if names
        else np.zeros((table.n_rows, 0))
    )
    age = (
        table.column(strata.age).astype(float)
        if strata.age is not None
        else np.full(table.n_rows, np.nan)
    )
    ids = (
        [str(v) for v in table.column(id_column)]
        if id_column is not None
        else [str(i + 1) for i in range(table.n_rows)]
    )
    cohort = LabeledCohort(
        features=features,
        feature_names=tuple(names),
        labels=labels,
        sex=np.array(_strata_text(table, strata.sex), dtype=object),
        race=np.array(_strata_text(table, strata.race), dtype=object),
        age=age,
        ids=tuple(ids),
    )
    logger.info(
        "Labeled %d subjects with %d features: %s",
        cohort.n,
        cohort.m,
        ", ".join(f"{k.display}={v}" for k, v in cohort.class_counts().items()),
    )
    return cohort
