"""Synthetic labeled cohorts with planted signal.

Every feature is drawn from the same noise distribution in every class,
except planted features, whose distribution differs for the first class of
a target pair. Cohorts can be written in the delimited format load_table
reads, together with diagnostic columns that the shipped label rule maps
back to the generated classes.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd

from factorsel.cohort import Label, LabeledCohort, StrataColumns
from factorsel.errors import ConfigError

logger = logging.getLogger(__name__)

SEXES = ("Male", "Female")
RACES = ("White", "Black")
RACE_WEIGHTS = (0.85, 0.15)
AGE_RANGE = (70.0, 100.0)

#: Strata columns of written cohorts.
SYNTH_STRATA = StrataColumns(sex="sex", race="race", age="age")
ID_COLUMN = "id"

# Diagnostic scores consistent with the "braak-cerad-tdp" rule.
_BRAAK = {True: 5, False: 2}
_CERAD = {True: 3, False: 1}
_TDP = {True: 2, False: 0}


class EffectKind(Enum):
    """How a planted feature differs in the target class."""

    MEAN_SHIFT = "mean_shift"
    CATEGORY_TILT = "category_tilt"


class NoiseKind(Enum):
    """Distribution of a feature's values."""

    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class PlantedEffect:
    """A difference planted in one feature.

    Attributes:
        feature: feature index
        kind: MEAN_SHIFT adds magnitude (in noise standard deviations) to the
            first class of the pair; CATEGORY_TILT moves a magnitude share of
            that class's probability onto the highest category
        magnitude: shift or tilt size; a tilt lies in [0, 1]
        pair: target classes; only the first class is altered

    """

    feature: int
    kind: EffectKind = EffectKind.MEAN_SHIFT
    magnitude: float = 1.0
    pair: tuple[Label, Label] = (Label.LATE, Label.AD)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic cohort.

    Attributes:
        n_per_class: subjects per class, in Label order (LATE_AD, LATE, AD,
            CONTROL)
        m: number of features
        planted: planted effects
        noise: one distribution for every feature, or one per feature
        n_categories: levels of CATEGORICAL features
        seed: random seed
        feature_prefix: features are named prefix + index

    """

    n_per_class: tuple[int, int, int, int]
    m: int
    planted: tuple[PlantedEffect, ...] = ()
    noise: NoiseKind | tuple[NoiseKind, ...] = NoiseKind.GAUSSIAN
    n_categories: int = 3
    seed: int = 0
    feature_prefix: str = "x"

    def __post_init__(self) -> None:
        """Validate the recipe."""
        object.__setattr__(self, "n_per_class", tuple(self.n_per_class))
        object.__setattr__(self, "planted", tuple(self.planted))
        if len(self.n_per_class) != len(Label) or min(self.n_per_class) < 0:
            raise ConfigError("n_per_class needs four non-negative counts")
        if self.m < 1:
            raise ConfigError("a synthetic cohort needs at least one feature")
        if isinstance(self.noise, tuple) and len(self.noise) != self.m:
            raise ConfigError("per-feature noise needs one entry per feature")
        if self.n_categories < 2:
            raise ConfigError("categorical features need at least two levels")
        for effect in self.planted:
            if not 0 <= effect.feature < self.m:
                raise ConfigError(f"planted feature {effect.feature} is out of range")
            if effect.pair[0] == effect.pair[1]:
                raise ConfigError("a planted effect needs two different classes")
            if effect.kind is EffectKind.CATEGORY_TILT:
                if self.noise_of(effect.feature) is not NoiseKind.CATEGORICAL:
                    raise ConfigError("category tilts need a categorical feature")
                if not 0.0 <= effect.magnitude <= 1.0:
                    raise ConfigError("a category tilt lies in [0, 1]")

    def noise_of(self, feature: int) -> NoiseKind:
        """Return the noise distribution of a feature."""
        if isinstance(self.noise, tuple):
            return self.noise[feature]
        return self.noise

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Return the generated feature names."""
        return tuple(f"{self.feature_prefix}{j}" for j in range(self.m))


def _noise(
    kind: NoiseKind, n: int, n_categories: int, rng: np.random.Generator
) -> npt.NDArray[np.float64]:
    if kind is NoiseKind.GAUSSIAN:
        return rng.standard_normal(n)
    if kind is NoiseKind.UNIFORM:
        # Unit variance, like the Gaussian.
        half = math.sqrt(3.0)
        return rng.uniform(-half, half, n)
    return rng.integers(0, n_categories, n).astype(float)


def generate(spec: SynthSpec) -> LabeledCohort:
    """Draw a cohort following the recipe.

    Rows are shuffled, so classes are interleaved. The same recipe always gives
    the same cohort.
    """
    rng = np.random.default_rng(spec.seed)
    labels = np.repeat(
        np.array([label.value for label in Label], dtype=np.int8), spec.n_per_class
    )
    labels = labels[rng.permutation(len(labels))]
    n = len(labels)
    X = np.column_stack(
        [_noise(spec.noise_of(j), n, spec.n_categories, rng) for j in range(spec.m)]
    )

    for effect in spec.planted:
        target = labels == effect.pair[0]
        if effect.kind is EffectKind.MEAN_SHIFT:
            X[target, effect.feature] += effect.magnitude
        else:
            tilted = rng.random(n) < effect.magnitude
            X[target & tilted, effect.feature] = spec.n_categories - 1

    sex = rng.choice(np.array(SEXES, dtype=object), size=n)
    race = rng.choice(np.array(RACES, dtype=object), size=n, p=RACE_WEIGHTS)
    age = np.round(rng.uniform(*AGE_RANGE, size=n), 1)
    logger.debug("Generated %d subjects × %d features, seed %d", n, spec.m, spec.seed)
    return LabeledCohort(
        features=X,
        feature_names=spec.feature_names,
        labels=labels,
        sex=sex,
        race=race,
        age=age,
        ids=tuple(f"S{i + 1:05d}" for i in range(n)),
    )


def to_frame(cohort: LabeledCohort) -> pd.DataFrame:
    """Return the cohort as a table with ID, feature, strata and diagnostic columns.

    The diagnostic columns braak, cerad and tdp_stage reproduce the labels
    under the "braak-cerad-tdp" rule.
    """
    labels = [Label(int(c)) for c in cohort.labels]
    ad = [label in (Label.AD, Label.LATE_AD) for label in labels]
    late = [label in (Label.LATE, Label.LATE_AD) for label in labels]
    frame = pd.DataFrame({ID_COLUMN: list(cohort.ids)})
    for j, name in enumerate(cohort.feature_names):
        frame[name] = cohort.features[:, j]
    frame["sex"] = cohort.sex
    frame["race"] = cohort.race
    frame["age"] = cohort.age
    frame["braak"] = [_BRAAK[a] for a in ad]
    frame["cerad"] = [_CERAD[a] for a in ad]
    frame["tdp_stage"] = [_TDP[t] for t in late]
    return frame


def synth_schema() -> dict[str, object]:
    """Return the load_table schema of written cohorts.

    Feature columns are left to the "real" default.
    """
    return {
        ID_COLUMN: "text",
        "sex": "text",
        "race": "text",
        "age": "real",
        "braak": "integer",
        "cerad": "integer",
        "tdp_stage": "integer",
    }


def write_cohort_csv(cohort: LabeledCohort, path: str | Path) -> Path:
    """Write a cohort in the format load_table reads.

    Floats are written with full precision so that reading the file back
    gives the same values.
    """
    path = Path(path)
    to_frame(cohort).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info("Wrote %d subjects to %s", cohort.n, path)
    return path
