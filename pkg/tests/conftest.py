"""Shared fixtures."""

import json
from pathlib import Path

import pytest
from factorsel.cohort import Label, LabeledCohort
from factorsel.strata import BinaryTask, StratumKind, StratumSpec, make_task
from factorsel.synthcohort import (
    EffectKind,
    PlantedEffect,
    SynthSpec,
    generate,
    synth_schema,
    write_cohort_csv,
)

PLANTED = (0, 1)


@pytest.fixture(scope="session")
def small_cohort() -> LabeledCohort:
    """A four-class cohort with two features planted for LATE vs AD."""
    spec = SynthSpec(
        n_per_class=(40, 60, 60, 80),
        m=6,
        planted=tuple(
            PlantedEffect(j, EffectKind.MEAN_SHIFT, 2.0, (Label.LATE, Label.AD))
            for j in PLANTED
        ),
        seed=11,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def late_vs_ad(small_cohort: LabeledCohort) -> BinaryTask:
    """The LATE vs AD task over the whole small cohort."""
    return make_task(small_cohort, Label.LATE, Label.AD, StratumSpec(StratumKind.ALL))


def fast_config(cohort_csv: Path, output_dir: Path) -> dict[str, object]:
    """Return a run config small enough for end-to-end tests."""
    return {
        "cohort": {
            "path": str(cohort_csv),
            "schema": synth_schema(),
            "id_column": "id",
            "strata": {"sex": "sex", "race": "race", "age": "age"},
        },
        "label_rule": "braak-cerad-tdp",
        "pairs": [["LATE", "AD"], ["AD", "Control"], ["LATE+AD", "LATE"]],
        "strata": ["all", "sex=Male", "race=Black"],
        "adequacy": {"min_minority": 10, "min_total": 48},
        "ranking": {"max_iters": 20, "patience": 5, "top_d": 3, "master_seed": 3},
        "selection": {
            "eval_seeds": 2,
            "classifier": {"kind": "extra_trees", "extra_trees": {"n_trees": 10}},
        },
        "validation": ["lda", {"kind": "mlp", "mlp": {"hidden_sizes": [4], "epochs": 20}}],
        "statistics": [
            {
                "name": "x0_anova",
                "kind": "anova",
                "variables": ["x0"],
                "scenarios": [["LATE", "AD"]],
            }
        ],
        "output_dir": str(output_dir),
    }


@pytest.fixture
def cohort_csv(tmp_path: Path, small_cohort: LabeledCohort) -> Path:
    """The small cohort written as a CSV file."""
    return write_cohort_csv(small_cohort, tmp_path / "cohort.csv")


@pytest.fixture
def config_file(tmp_path: Path, cohort_csv: Path) -> Path:
    """A JSON run config for the small cohort."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps(fast_config(cohort_csv, tmp_path / "out")), encoding="utf-8")
    return path
