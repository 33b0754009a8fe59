"""Binary (class-pair × stratum) tasks and their sample-size gate."""

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt

from factorsel.cohort import Label, LabeledCohort
from factorsel.errors import ConfigError

logger = logging.getLogger(__name__)

ClassPair = tuple[Label, Label]

#: The six contrasts, in the order the cohort summary table lists them.
DEFAULT_PAIRS: tuple[ClassPair, ...] = (
    (Label.LATE, Label.AD),
    (Label.LATE_AD, Label.AD),
    (Label.LATE_AD, Label.LATE),
    (Label.LATE_AD, Label.CONTROL),
    (Label.LATE, Label.CONTROL),
    (Label.AD, Label.CONTROL),
)

_STRATUM_RE = re.compile(
    r"^\s*(?:(all)|(sex|race)\s*=\s*(.+?)|age\s*(>|<=)\s*([0-9.eE+-]+))\s*$",
    re.IGNORECASE,
)


class StratumKind(Enum):
    """The kinds of subpopulation slice."""

    ALL = "all"
    SEX = "sex"
    RACE = "race"
    AGE_GT = "age>"
    AGE_LE = "age<="


@dataclass(frozen=True)
class StratumSpec:
    """A subpopulation slice.

    Attributes:
        kind: which attribute the slice uses
        value: the sex or race value for SEX and RACE slices
        threshold: the age in years for AGE_GT and AGE_LE slices

    """

    kind: StratumKind
    value: str | None = None
    threshold: float | None = None

    def __post_init__(self) -> None:
        """Validate the fields required by the kind."""
        if self.kind in (StratumKind.SEX, StratumKind.RACE) and not self.value:
            raise ConfigError(f"{self.kind.value} stratum needs a value")
        if self.kind in (StratumKind.AGE_GT, StratumKind.AGE_LE):
            if (
                self.threshold is None
                or not math.isfinite(self.threshold)
                or self.threshold <= 0
            ):
                raise ConfigError("age thresholds must be finite positive numbers")

    def __str__(self) -> str:
        """Return the parseable form, e.g. "sex=Male" or "age<=85"."""
        if self.kind is StratumKind.ALL:
            return "all"
        if self.kind in (StratumKind.SEX, StratumKind.RACE):
            return f"{self.kind.value}={self.value}"
        return f"{self.kind.value}{self.threshold:g}"

    @property
    def name(self) -> str:
        """Return the display name, e.g. "All", "Male" or ">85"."""
        if self.kind is StratumKind.ALL:
            return "All"
        if self.kind in (StratumKind.SEX, StratumKind.RACE):
            assert self.value is not None
            return self.value
        op = ">" if self.kind is StratumKind.AGE_GT else "<="
        return f"{op}{self.threshold:g}"

    @property
    def slug(self) -> str:
        """Return a file-name-safe identifier, e.g. "sex-male" or "age-le-85"."""
        if self.kind is StratumKind.ALL:
            return "all"
        if self.kind in (StratumKind.SEX, StratumKind.RACE):
            assert self.value is not None
            value = re.sub(r"[^a-z0-9]+", "-", self.value.lower()).strip("-")
            return f"{self.kind.value}-{value}"
        op = "gt" if self.kind is StratumKind.AGE_GT else "le"
        return f"age-{op}-{self.threshold:g}"

    @classmethod
    def parse(cls, text: str) -> "StratumSpec":
        """Parse "all", "sex=VALUE", "race=VALUE", "age>YEARS" or "age<=YEARS".

        Raises:
            ConfigError: text is not a stratum

        """
        m = _STRATUM_RE.match(text)
        if not m:
            raise ConfigError(f"Cannot parse stratum: {text!r}")
        if m.group(1):
            return cls(StratumKind.ALL)
        if m.group(2):
            return cls(StratumKind(m.group(2).lower()), value=m.group(3))
        try:
            threshold = float(m.group(5))
        except ValueError:
            raise ConfigError(f"Cannot parse stratum: {text!r}") from None
        kind = StratumKind.AGE_GT if m.group(4) == ">" else StratumKind.AGE_LE
        return cls(kind, threshold=threshold)

    def matches(self, cohort: LabeledCohort) -> npt.NDArray[np.bool_]:
        """Return which subjects of the cohort fall in this stratum.

        The boundary age belongs to the AGE_LE stratum.
        """
        if self.kind is StratumKind.ALL:
            return np.ones(cohort.n, dtype=bool)
        if self.kind is StratumKind.SEX:
            return np.asarray(cohort.sex == self.value, dtype=bool)
        if self.kind is StratumKind.RACE:
            return np.asarray(cohort.race == self.value, dtype=bool)
        with np.errstate(invalid="ignore"):
            if self.kind is StratumKind.AGE_GT:
                return np.asarray(cohort.age > self.threshold, dtype=bool)
            return np.asarray(cohort.age <= self.threshold, dtype=bool)


def default_strata(age_threshold: float = 85.0) -> list[StratumSpec]:
    """Return All, Male, Female, Black, White, <=threshold and >threshold."""
    return [
        StratumSpec(StratumKind.ALL),
        StratumSpec(StratumKind.SEX, value="Male"),
        StratumSpec(StratumKind.SEX, value="Female"),
        StratumSpec(StratumKind.RACE, value="Black"),
        StratumSpec(StratumKind.RACE, value="White"),
        StratumSpec(StratumKind.AGE_LE, threshold=age_threshold),
        StratumSpec(StratumKind.AGE_GT, threshold=age_threshold),
    ]


def _frozen(array: npt.ArrayLike, dtype: npt.DTypeLike) -> npt.NDArray[np.generic]:
    result = np.array(array, dtype=dtype, copy=True)
    result.flags.writeable = False
    return result


@dataclass(frozen=True)
class BinaryTask:
    """A two-class slice of a cohort.

    Attributes:
        class1: the positive class (y = 1)
        class2: the negative class (y = 0)
        stratum: the subpopulation the rows were drawn from
        X: n × m feature matrix
        y: binary labels, 1 for class1
        feature_names: m feature names
        rows: index of each row in the source cohort

    """

    class1: Label
    class2: Label
    stratum: StratumSpec
    X: npt.NDArray[np.float64]
    y: npt.NDArray[np.int8]
    feature_names: tuple[str, ...]
    rows: npt.NDArray[np.intp]

    def __post_init__(self) -> None:
        """Freeze arrays and check shapes."""
        object.__setattr__(self, "X", _frozen(self.X, float))
        object.__setattr__(self, "y", _frozen(self.y, np.int8))
        object.__setattr__(self, "rows", _frozen(self.rows, np.intp))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.X.ndim != 2 or self.X.shape != (len(self.y), len(self.feature_names)):
            raise ValueError("task matrix does not match labels and names")

    def __str__(self) -> str:
        """Return e.g. "LATE vs AD [Male]"."""
        return f"{self.pair_name} [{self.stratum.name}]"

    @property
    def pair_name(self) -> str:
        """Return e.g. "LATE vs AD"."""
        return f"{self.class1.display} vs {self.class2.display}"

    @property
    def slug(self) -> str:
        """Return a directory-safe identifier, e.g. "late_ad-vs-control_sex-male"."""
        return f"{self.class1.name.lower()}-vs-{self.class2.name.lower()}_{self.stratum.slug}"

    @property
    def n(self) -> int:
        """Return the number of rows."""
        return len(self.y)

    @property
    def m(self) -> int:
        """Return the number of features."""
        return len(self.feature_names)

    @property
    def n1(self) -> int:
        """Return the number of class1 rows."""
        return int(self.y.sum())

    @property
    def n2(self) -> int:
        """Return the number of class2 rows."""
        return self.n - self.n1

    def subset(self, index: npt.NDArray[np.intp]) -> "BinaryTask":
        """Return a task with the given rows, in the given order."""
        return BinaryTask(
            self.class1,
            self.class2,
            self.stratum,
            self.X[index],
            self.y[index],
            self.feature_names,
            self.rows[index],
        )

    def with_features(self, columns: Sequence[int]) -> "BinaryTask":
        """Return a task restricted to the given feature columns."""
        index = list(columns)
        return BinaryTask(
            self.class1,
            self.class2,
            self.stratum,
            self.X[:, index],
            self.y,
            tuple(self.feature_names[j] for j in index),
            self.rows,
        )


@dataclass(frozen=True)
class AdequacyPolicy:
    """Minimum sample sizes for a task to be analyzed.

    Attributes:
        min_minority: minimum size of the smaller class
        min_total: minimum number of rows

    """

    min_minority: int = 10
    min_total: int = 48

    def __post_init__(self) -> None:
        """Validate the bounds."""
        if self.min_minority < 1 or self.min_total < 1:
            raise ConfigError("adequacy bounds must be at least 1")

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "AdequacyPolicy":
        """Create an instance from a dictionary with optional bounds."""
        defaults = cls()

        def _int(key: str, default: int) -> int:
            val = data.get(key, default)
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"adequacy '{key}' must be an integer")
            return val

        return cls(
            min_minority=_int("min_minority", defaults.min_minority),
            min_total=_int("min_total", defaults.min_total),
        )


def make_task(
    cohort: LabeledCohort, class1: Label, class2: Label, stratum: StratumSpec
) -> BinaryTask:
    """Select the rows of two classes within a stratum.

    An empty result is returned as a task with no rows.

    Raises:
        ValueError: class1 equals class2

    """
    if class1 == class2:
        raise ValueError("a binary task needs two different classes")
    mask = np.isin(cohort.labels, [int(class1), int(class2)]) & stratum.matches(cohort)
    rows = np.flatnonzero(mask)
    return BinaryTask(
        class1,
        class2,
        stratum,
        cohort.features[rows],
        (cohort.labels[rows] == class1).astype(np.int8),
        cohort.feature_names,
        rows,
    )


def is_adequate(task: BinaryTask, policy: AdequacyPolicy) -> bool:
    """Return True if both the smaller class and the whole task are big enough."""
    return (
        min(task.n1, task.n2) >= policy.min_minority
        and task.n1 + task.n2 >= policy.min_total
    )


def enumerate_tasks(
    cohort: LabeledCohort,
    pairs: Iterable[ClassPair],
    strata: Sequence[StratumSpec],
    policy: AdequacyPolicy,
) -> list[tuple[BinaryTask, bool]]:
    """Build every (pair, stratum) task with its adequacy verdict.

    Pairs vary in the outer loop and strata in the inner loop.
    """
    result = []
    for class1, class2 in pairs:
        for stratum in strata:
            task = make_task(cohort, class1, class2, stratum)
            adequate = is_adequate(task, policy)
            logger.debug(
                "%s: n1=%d n2=%d adequate=%s", task, task.n1, task.n2, adequate
            )
            result.append((task, adequate))
    return result


@dataclass(frozen=True)
class InventoryRow:
    """One line of the task inventory.

    Attributes:
        pair: e.g. "LATE vs AD"
        stratum: stratum display name
        slug: the task's directory-safe identifier
        n1: class1 rows
        n2: class2 rows
        adequate: the adequacy verdict
        excluded: the task was excluded by configuration

    """

    pair: str
    stratum: str
    slug: str
    n1: int
    n2: int
    adequate: bool
    excluded: bool

    @property
    def runnable(self) -> bool:
        """Return True if the task should be analyzed."""
        return self.adequate and not self.excluded


def is_excluded(task: BinaryTask, exclusions: Iterable[str]) -> bool:
    """Return True if any exclusion names the task.

    An exclusion is either the task's slug or its display form, e.g.
    "LATE vs AD [Male]"; the comparison ignores case.
    """
    names = {task.slug.lower(), str(task).lower()}
    return any(e.strip().lower() in names for e in exclusions)


def task_inventory(
    tasks: Sequence[tuple[BinaryTask, bool]], exclusions: Iterable[str] = ()
) -> list[InventoryRow]:
    """Summarize enumerated tasks as a class-count table."""
    exclusions = list(exclusions)
    return [
        InventoryRow(
            pair=task.pair_name,
            stratum=task.stratum.name,
            slug=task.slug,
            n1=task.n1,
            n2=task.n2,
            adequate=adequate,
            excluded=is_excluded(task, exclusions),
        )
        for task, adequate in tasks
    ]
