"""Run configuration.

One JSON file drives a whole run. Relative paths in it are resolved against
the directory containing the file. Every section is optional except
``cohort`` and ``label_rule``.
"""

import json
import logging
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable

import pyparsing as pp

from factorsel.balance_rank import RankingParams
from factorsel.battery import StatisticsEntry, check_entry, check_unique_names
from factorsel.cohort import DEFAULT_MISSING, Label, RawTable, StrataColumns
from factorsel.errors import ConfigError, SchemaError
from factorsel.label_rule import LabelRule, check_columns
from factorsel.learners import LearnerKind, LearnerSpec
from factorsel.strata import (
    DEFAULT_PAIRS,
    AdequacyPolicy,
    ClassPair,
    StratumKind,
    StratumSpec,
    default_strata,
)
from factorsel.subset_select import SelectionParams

logger = logging.getLogger(__name__)

DEFAULT_VALIDATION = (LearnerSpec(LearnerKind.LDA), LearnerSpec(LearnerKind.MLP))


@dataclass(frozen=True)
class CohortConfig:
    """Where the cohort is and how to read it.

    Attributes:
        path: delimited text file with a header row
        schema: column types, as accepted by load_table
        delimiter: field separator
        missing_values: cell texts that mark a missing value
        id_column: subject identifier column, never a feature
        strata: columns holding sex, race and age
        exclude_columns: further columns that are not features

    """

    path: Path
    schema: dict[str, object] = field(default_factory=dict)
    delimiter: str = ","
    missing_values: tuple[str, ...] = DEFAULT_MISSING
    id_column: str | None = None
    strata: StrataColumns = StrataColumns()
    exclude_columns: tuple[str, ...] = ()

    def referenced_columns(self) -> set[str]:
        """Return the columns named outside the schema."""
        names = set(self.strata.names()) | set(self.exclude_columns)
        if self.id_column is not None:
            names.add(self.id_column)
        return names

    @classmethod
    def from_dict(cls, data: dict[str, object], base_dir: Path) -> "CohortConfig":
        """Create an instance from a dictionary.

        Raises:
            ConfigError: "path" is missing or a setting is malformed

        """

        def _str(key: str) -> str | None:
            val = data.get(key)
            if val is None:
                return None
            if not isinstance(val, str):
                raise ConfigError(f"cohort '{key}' must be a string")
            return val

        path = _str("path")
        if path is None:
            raise ConfigError("cohort 'path' is required")
        schema = data.get("schema", {})
        missing = data.get("missing_values", list(DEFAULT_MISSING))
        exclude = data.get("exclude_columns", [])
        strata = data.get("strata", {})
        if not isinstance(schema, dict):
            raise ConfigError("cohort 'schema' must be an object")
        if not isinstance(missing, list) or not isinstance(exclude, list):
            raise ConfigError("cohort 'missing_values' and 'exclude_columns' must be lists")
        if not isinstance(strata, dict) or not all(
            k in ("sex", "race", "age") and (v is None or isinstance(v, str))
            for k, v in strata.items()
        ):
            raise ConfigError("cohort 'strata' maps sex, race and age to column names")
        return cls(
            path=(base_dir / path).resolve(),
            schema=dict(schema),
            delimiter=_str("delimiter") or ",",
            missing_values=tuple(str(m) for m in missing),
            id_column=_str("id_column"),
            strata=StrataColumns(**strata),
            exclude_columns=tuple(str(c) for c in exclude),
        )


def _parse_pair(value: object) -> ClassPair:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(v, str) for v in value)
    ):
        raise ConfigError(f"a class pair is a list of two class names, not {value!r}")
    try:
        first, second = Label.parse(value[0]), Label.parse(value[1])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if first == second:
        raise ConfigError(f"a class pair needs two different classes: {value!r}")
    return first, second


def _parse_rule(value: object, base_dir: Path) -> LabelRule:
    try:
        if isinstance(value, str):
            return LabelRule.named(value)
        if isinstance(value, dict) and isinstance(value.get("file"), str):
            return LabelRule.from_file(str(base_dir / value["file"]))
        if isinstance(value, dict):
            return LabelRule.from_dict(value)
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from None
    except (pp.ParseException, ValueError) as e:
        raise ConfigError(f"Invalid label rule: {e}") from None
    raise ConfigError("'label_rule' must be a rule name or an object")


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs.

    Attributes:
        cohort: input file and schema
        label_rule: diagnostic rule assigning the four classes
        pairs: class pairs analyzed, positive class first
        strata: subpopulations analyzed
        exclude_tasks: tasks skipped by name (slug or "PAIR [STRATUM]")
        adequacy: sample-size gate
        ranking: feature ranking settings
        selection: prefix selection settings, including the selection learner
        validation: independent learners re-evaluating each ranking
        statistics: statistical battery entries
        output_dir: where artifacts are written
        overwrite: allow writing into a non-empty output directory
        n_jobs: worker processes for tasks (1 = sequential)
        record_timing: add wall-clock durations to the manifest

    """

    cohort: CohortConfig
    label_rule: LabelRule
    pairs: tuple[ClassPair, ...] = DEFAULT_PAIRS
    strata: tuple[StratumSpec, ...] = field(
        default_factory=lambda: tuple(default_strata())
    )
    exclude_tasks: tuple[str, ...] = ()
    adequacy: AdequacyPolicy = AdequacyPolicy()
    ranking: RankingParams = field(default_factory=RankingParams)
    selection: SelectionParams = field(default_factory=SelectionParams)
    validation: tuple[LearnerSpec, ...] = DEFAULT_VALIDATION
    statistics: tuple[StatisticsEntry, ...] = ()
    output_dir: Path = Path("factorsel-output")
    overwrite: bool = False
    n_jobs: int = 1
    record_timing: bool = False

    def __post_init__(self) -> None:
        """Validate cross-section invariants."""
        if not self.pairs or not self.strata:
            raise ConfigError("at least one class pair and one stratum are required")
        if len(set(self.pairs)) != len(self.pairs):
            raise ConfigError("class pairs must be distinct")
        if len({str(s) for s in self.strata}) != len(self.strata):
            raise ConfigError("strata must be distinct")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must not be 0")
        check_unique_names(self.statistics)
        needs = {
            StratumKind.SEX: self.cohort.strata.sex,
            StratumKind.RACE: self.cohort.strata.race,
            StratumKind.AGE_GT: self.cohort.strata.age,
            StratumKind.AGE_LE: self.cohort.strata.age,
        }
        for stratum in self.strata:
            if stratum.kind in needs and needs[stratum.kind] is None:
                raise ConfigError(
                    f"stratum {stratum} needs the cohort's {stratum.kind.value.rstrip('<=>')} column"
                )

    def check_columns(self, table: RawTable) -> None:
        """Check that every referenced column exists and is usable.

        Raises:
            SchemaError: a referenced column is absent or unusable

        """
        available = table.column_names
        missing = sorted(self.cohort.referenced_columns() - set(available))
        if missing:
            raise SchemaError(f"cohort settings name unknown columns: {missing}")
        check_columns(self.label_rule.ad_predicate, available)
        check_columns(self.label_rule.late_predicate, available)
        for entry in self.statistics:
            check_entry(entry, table)

    @classmethod
    def from_dict(cls, data: dict[str, object], base_dir: str | Path = ".") -> "RunConfig":
        """Create an instance from a parsed config document.

        Raises:
            ConfigError: a section is missing or malformed

        """
        base = Path(base_dir)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config sections: {unknown}")

        def _section(key: str) -> dict[str, object]:
            val = data.get(key, {})
            if not isinstance(val, dict):
                raise ConfigError(f"'{key}' must be an object")
            return val

        def _list(key: str) -> list[object] | None:
            val = data.get(key)
            if val is not None and not isinstance(val, list):
                raise ConfigError(f"'{key}' must be a list")
            return val

        if "cohort" not in data or "label_rule" not in data:
            raise ConfigError("config needs 'cohort' and 'label_rule'")
        pairs = _list("pairs")
        strata = _list("strata")
        validation = _list("validation")
        statistics = _list("statistics") or []
        exclude = _list("exclude_tasks") or []
        output_dir = data.get("output_dir", "factorsel-output")
        n_jobs = data.get("n_jobs", 1)
        if not isinstance(output_dir, str):
            raise ConfigError("'output_dir' must be a string")
        if isinstance(n_jobs, bool) or not isinstance(n_jobs, int):
            raise ConfigError("'n_jobs' must be an integer")
        if not all(isinstance(s, str) for s in (strata or [])):
            raise ConfigError("'strata' must list stratum strings")
        if not all(isinstance(e, dict) for e in statistics):
            raise ConfigError("'statistics' must list objects")
        if not all(isinstance(v, (str, dict)) for v in (validation or [])):
            raise ConfigError("'validation' must list learner names or objects")
        return cls(
            cohort=CohortConfig.from_dict(_section("cohort"), base),
            label_rule=_parse_rule(data["label_rule"], base),
            pairs=(
                tuple(_parse_pair(p) for p in pairs)
                if pairs is not None
                else DEFAULT_PAIRS
            ),
            strata=(
                tuple(StratumSpec.parse(str(s)) for s in strata)
                if strata is not None
                else tuple(default_strata())
            ),
            exclude_tasks=tuple(str(e) for e in exclude),
            adequacy=AdequacyPolicy.from_dict(_section("adequacy")),
            ranking=RankingParams.from_dict(_section("ranking")),
            selection=SelectionParams.from_dict(_section("selection")),
            validation=(
                tuple(LearnerSpec.from_dict(v) for v in validation)  # type: ignore[arg-type]
                if validation is not None
                else DEFAULT_VALIDATION
            ),
            statistics=tuple(StatisticsEntry.from_dict(e) for e in statistics),  # type: ignore[arg-type]
            output_dir=(base / output_dir).resolve(),
            overwrite=bool(data.get("overwrite", False)),
            n_jobs=n_jobs,
            record_timing=bool(data.get("record_timing", False)),
        )

    @classmethod
    def from_file(cls, file_path: str | Path) -> "RunConfig":
        """Create an instance from a JSON file.

        Raises:
            FileNotFoundError: no such file
            ConfigError: the file is not valid JSON or not a valid config

        """
        path = Path(file_path)
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: the config must be a JSON object")
        logger.debug("Loaded config %s", path)
        return cls.from_dict(data, path.parent)

    @classmethod
    def named(cls, identifier: str) -> "RunConfig":
        """Load a config shipped in the package data directory.

        Args:
            identifier: Available values:

                - "synthetic-demo": a small synthetic cohort shipped beside
                  the config

        Raises:
            FileNotFoundError: no config with that identifier

        """
        path = resources.files("factorsel").joinpath(
            "data", "configs", f"{identifier}.json"
        )
        if path.is_file():
            return cls.from_file(str(path))
        raise FileNotFoundError(f"Unknown config identifier: {identifier}")

    def to_dict(self) -> dict[str, object]:
        """Return a JSON-ready echo of the settings.

        The output directory is omitted, so runs that differ only in where
        they write echo the same settings.
        """
        echo = _plain(self)
        assert isinstance(echo, dict)
        echo.pop("output_dir")
        echo["label_rule"] = {
            "ad": str(self.label_rule.ad_predicate),
            "late": str(self.label_rule.late_predicate),
            "identifier": self.label_rule.identifier,
        }
        echo["pairs"] = [[a.display, b.display] for a, b in self.pairs]
        echo["strata"] = [str(s) for s in self.strata]
        return echo


def _plain(value: object) -> object:
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def resolve_learners(specs: Iterable[LearnerSpec], selection: LearnerSpec) -> list[LearnerSpec]:
    """Return the validation learners, each once, without the selection learner."""
    result: list[LearnerSpec] = []
    for spec in specs:
        if spec != selection and spec not in result:
            result.append(spec)
    return result
