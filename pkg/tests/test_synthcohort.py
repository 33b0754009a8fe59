"""Tests for synthetic cohorts."""

from pathlib import Path

import numpy as np
import pytest
from factorsel.cohort import Label, LabeledCohort, assign_labels, load_table
from factorsel.errors import ConfigError
from factorsel.infostats import anova_oneway, chi2_independence, contingency_table
from factorsel.label_rule import LabelRule
from factorsel.synthcohort import (
    ID_COLUMN,
    SYNTH_STRATA,
    EffectKind,
    NoiseKind,
    PlantedEffect,
    SynthSpec,
    generate,
    synth_schema,
    to_frame,
    write_cohort_csv,
)


def test_shape_and_counts() -> None:
    """Test class sizes, names and strata values."""
    cohort = generate(SynthSpec((5, 6, 7, 8), m=4, seed=1))
    assert cohort.n == 26
    assert cohort.feature_names == ("x0", "x1", "x2", "x3")
    assert cohort.class_counts() == {
        Label.LATE_AD: 5,
        Label.LATE: 6,
        Label.AD: 7,
        Label.CONTROL: 8,
    }
    assert set(cohort.sex) <= {"Male", "Female"}
    assert set(cohort.race) <= {"White", "Black"}
    assert cohort.age.min() >= 70 and cohort.age.max() <= 100
    assert len(set(cohort.ids)) == cohort.n


def test_same_seed_same_cohort() -> None:
    """Test that generation is deterministic."""
    spec = SynthSpec((10, 10, 10, 10), m=3, seed=5)
    a, b = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.age, b.age)
    c = generate(SynthSpec((10, 10, 10, 10), m=3, seed=6))
    assert not np.array_equal(a.features, c.features)


def test_planted_shift(small_cohort: LabeledCohort) -> None:
    """Test that planted features differ between the target classes."""
    late = small_cohort.labels == Label.LATE
    ad = small_cohort.labels == Label.AD
    for j in (0, 1):
        column = small_cohort.features[:, j]
        assert anova_oneway([column[late], column[ad]]).p_value < 1e-8
    shift = small_cohort.features[late, 0].mean() - small_cohort.features[ad, 0].mean()
    assert shift == pytest.approx(2.0, abs=0.5)


def test_category_tilt() -> None:
    """Test a tilt toward the highest category."""
    spec = SynthSpec(
        (0, 200, 200, 0),
        m=2,
        noise=NoiseKind.CATEGORICAL,
        n_categories=3,
        planted=(PlantedEffect(1, EffectKind.CATEGORY_TILT, 0.5),),
        seed=2,
    )
    cohort = generate(spec)
    values = cohort.features[:, 1]
    assert set(np.unique(cohort.features)) <= {0.0, 1.0, 2.0}
    late = values[cohort.labels == Label.LATE]
    ad = values[cohort.labels == Label.AD]
    # A half tilt lifts the top level from about 1/3 to about 2/3.
    assert np.mean(late == 2) == pytest.approx(2 / 3, abs=0.1)
    assert np.mean(ad == 2) == pytest.approx(1 / 3, abs=0.1)
    table = contingency_table(values, cohort.labels)
    assert chi2_independence(table).p_value < 1e-6


def test_mixed_noise() -> None:
    """Test per-feature noise kinds."""
    spec = SynthSpec(
        (50, 50, 50, 50),
        m=3,
        noise=(NoiseKind.GAUSSIAN, NoiseKind.UNIFORM, NoiseKind.CATEGORICAL),
        n_categories=4,
    )
    cohort = generate(spec)
    uniform = cohort.features[:, 1]
    assert np.abs(uniform).max() <= np.sqrt(3)
    assert set(np.unique(cohort.features[:, 2])) <= {0.0, 1.0, 2.0, 3.0}


def test_invalid_specs() -> None:
    """Test recipe validation."""
    with pytest.raises(ConfigError):
        SynthSpec((1, 2, 3), m=2)  # type: ignore[arg-type]
    with pytest.raises(ConfigError):
        SynthSpec((1, 2, 3, -1), m=2)
    with pytest.raises(ConfigError):
        SynthSpec((1, 1, 1, 1), m=0)
    with pytest.raises(ConfigError):
        SynthSpec((1, 1, 1, 1), m=2, planted=(PlantedEffect(2),))
    with pytest.raises(ConfigError):
        SynthSpec((1, 1, 1, 1), m=2, planted=(PlantedEffect(0, pair=(Label.AD, Label.AD)),))
    with pytest.raises(ConfigError):
        SynthSpec((1, 1, 1, 1), m=2, planted=(PlantedEffect(0, EffectKind.CATEGORY_TILT, 0.5),))
    with pytest.raises(ConfigError):
        SynthSpec(
            (1, 1, 1, 1),
            m=1,
            noise=NoiseKind.CATEGORICAL,
            planted=(PlantedEffect(0, EffectKind.CATEGORY_TILT, 1.5),),
        )
    with pytest.raises(ConfigError):
        SynthSpec((1, 1, 1, 1), m=2, noise=(NoiseKind.GAUSSIAN,))


def test_frame_columns(small_cohort: LabeledCohort) -> None:
    """Test the written column layout."""
    frame = to_frame(small_cohort)
    assert list(frame.columns) == [
        ID_COLUMN,
        *small_cohort.feature_names,
        "sex",
        "race",
        "age",
        "braak",
        "cerad",
        "tdp_stage",
    ]
    assert set(synth_schema()) <= set(frame.columns)


def test_csv_round_trip(tmp_path: Path, small_cohort: LabeledCohort) -> None:
    """Test that the shipped rule recovers the generated classes from a file."""
    path = write_cohort_csv(small_cohort, tmp_path / "cohort.csv")
    table = load_table(path, synth_schema())
    cohort = assign_labels(
        table, LabelRule.named("braak-cerad-tdp"), ID_COLUMN, SYNTH_STRATA
    )
    np.testing.assert_array_equal(cohort.labels, small_cohort.labels)
    np.testing.assert_array_equal(cohort.features, small_cohort.features)
    assert cohort.feature_names == small_cohort.feature_names
    assert cohort.ids == small_cohort.ids
    np.testing.assert_array_equal(cohort.age, small_cohort.age)
    assert list(cohort.sex) == list(small_cohort.sex)
