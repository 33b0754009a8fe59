"""Tests for run configuration."""

import json
from pathlib import Path

import pytest
from factorsel.cohort import Label, load_table
from factorsel.config import DEFAULT_VALIDATION, CohortConfig, RunConfig, resolve_learners
from factorsel.errors import ConfigError, SchemaError
from factorsel.label_rule import Comparison
from factorsel.learners import LearnerKind, LearnerSpec
from factorsel.strata import DEFAULT_PAIRS

from tests.conftest import fast_config

STRATA = {"sex": "sex", "race": "race", "age": "age"}


def _minimal(**extra: object) -> dict[str, object]:
    data: dict[str, object] = {
        "cohort": {"path": "cohort.csv", "strata": STRATA},
        "label_rule": "braak-cerad-tdp",
    }
    data.update(extra)
    return data


def test_defaults(tmp_path: Path) -> None:
    """Test a config with only the required sections."""
    config = RunConfig.from_dict(_minimal(), tmp_path)
    assert config.cohort.path == (tmp_path / "cohort.csv").resolve()
    assert config.output_dir == (tmp_path / "factorsel-output").resolve()
    assert config.pairs == DEFAULT_PAIRS
    assert [s.name for s in config.strata][:2] == ["All", "Male"]
    assert len(config.strata) == 7
    assert config.validation == DEFAULT_VALIDATION
    assert config.adequacy.min_total == 48
    assert config.selection.eval_seeds == tuple(range(10))
    assert config.statistics == ()
    assert not config.overwrite
    assert not config.record_timing


def test_full_config(tmp_path: Path) -> None:
    """Test every section of a complete config."""
    config = RunConfig.from_dict(fast_config(tmp_path / "c.csv", tmp_path / "out"), tmp_path)
    assert config.pairs[2] == (Label.LATE_AD, Label.LATE)
    assert [str(s) for s in config.strata] == ["all", "sex=Male", "race=Black"]
    assert config.ranking.max_iters == 20
    assert config.ranking.master_seed == 3
    assert config.selection.eval_seeds == (0, 1)
    assert config.selection.classifier.extra_trees.n_trees == 10
    assert [v.kind for v in config.validation] == [LearnerKind.LDA, LearnerKind.MLP]
    assert config.validation[1].mlp.hidden_sizes == (4,)
    assert config.statistics[0].name == "x0_anova"
    assert config.cohort.id_column == "id"


def test_label_rule_forms(tmp_path: Path) -> None:
    """Test named, inline and file rules."""
    inline = RunConfig.from_dict(
        _minimal(label_rule={"ad": "braak >= 5", "late": "tdp_stage >= 2"}), tmp_path
    )
    assert inline.label_rule.ad_predicate == Comparison("braak", ">=", 5.0)
    (tmp_path / "rule.json").write_text(
        json.dumps({"ad": "braak >= 3", "late": "tdp_stage > 0"}), encoding="utf-8"
    )
    from_file = RunConfig.from_dict(_minimal(label_rule={"file": "rule.json"}), tmp_path)
    assert from_file.label_rule.late_predicate == Comparison("tdp_stage", ">", 0.0)
    for bad in ["no-such-rule", {"ad": "braak >=", "late": "x > 1"}, {"ad": "braak > 1"}, 3, {"file": "x.json"}]:
        with pytest.raises(ConfigError):
            RunConfig.from_dict(_minimal(label_rule=bad), tmp_path)


def test_invalid_configs(tmp_path: Path) -> None:
    """Test malformed sections and broken invariants."""
    bad_configs = [
        {"cohort": {"path": "c.csv"}},
        _minimal(colour="blue"),
        _minimal(pairs=[["LATE", "LATE"]]),
        _minimal(pairs=[["LATE"]]),
        _minimal(pairs=[["FTD", "AD"]]),
        _minimal(pairs=[["LATE", "AD"], ["late", "ad"]]),
        _minimal(pairs=[]),
        _minimal(strata=["all", "all"]),
        _minimal(strata=["everyone"]),
        _minimal(strata="all"),
        _minimal(n_jobs=0),
        _minimal(n_jobs="2"),
        _minimal(output_dir=5),
        _minimal(ranking=[]),
        _minimal(validation=["svm"]),
        _minimal(statistics=[{"name": "a", "kind": "anova", "variables": ["x"],
                              "scenarios": [["LATE", "AD"]]}] * 2),
        {"cohort": {"path": "c.csv"}, "label_rule": "braak-cerad-tdp"},
        {"cohort": {"strata": STRATA}, "label_rule": "braak-cerad-tdp"},
        {"cohort": {"path": "c.csv", "strata": {"ethnicity": "e"}},
         "label_rule": "braak-cerad-tdp"},
    ]
    for data in bad_configs:
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data, tmp_path)


def test_strata_need_columns(tmp_path: Path) -> None:
    """Test that strata without their cohort column are refused."""
    data = {
        "cohort": {"path": "c.csv", "strata": {"sex": "sex"}},
        "label_rule": "braak-cerad-tdp",
        "strata": ["all", "sex=Female"],
    }
    assert len(RunConfig.from_dict(data, tmp_path).strata) == 2
    data["strata"] = ["all", "age>85"]
    with pytest.raises(ConfigError, match="age"):
        RunConfig.from_dict(data, tmp_path)


def test_from_file(tmp_path: Path) -> None:
    """Test reading configs from JSON files."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_minimal()), encoding="utf-8")
    assert RunConfig.from_file(path).cohort.path == (tmp_path / "cohort.csv").resolve()
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)
    path.write_text("[]", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)
    with pytest.raises(FileNotFoundError):
        RunConfig.from_file(tmp_path / "missing.json")


def test_named_config() -> None:
    """Test the shipped demo config."""
    config = RunConfig.named("synthetic-demo")
    assert config.cohort.path.is_file()
    assert config.cohort.path.name == "synthetic-demo.csv"
    assert len(config.pairs) == 6
    assert len(config.statistics) == 4
    with pytest.raises(FileNotFoundError):
        RunConfig.named("no-such-config")


def test_check_columns(tmp_path: Path) -> None:
    """Test checking a config against the cohort's columns."""
    path = tmp_path / "cohort.csv"
    path.write_text("braak,cerad,tdp_stage,sex,race,age,x\n5,3,0,Male,White,80,1.0\n", encoding="utf-8")
    table = load_table(path, {"sex": "text", "race": "text"})
    RunConfig.from_dict(_minimal(), tmp_path).check_columns(table)
    with_id = _minimal(cohort={"path": "cohort.csv", "strata": STRATA, "id_column": "id"})
    with pytest.raises(SchemaError):
        RunConfig.from_dict(with_id, tmp_path).check_columns(table)
    with_stats = _minimal(
        statistics=[{"name": "s", "kind": "anova", "variables": ["sex"], "scenarios": [["LATE", "AD"]]}]
    )
    with pytest.raises(SchemaError):
        RunConfig.from_dict(with_stats, tmp_path).check_columns(table)


def test_cohort_config_columns(tmp_path: Path) -> None:
    """Test the columns named by the cohort settings."""
    cohort = CohortConfig.from_dict(
        {
            "path": "c.tsv",
            "delimiter": "\t",
            "missing_values": ["-9"],
            "id_column": "id",
            "strata": {"sex": "gender"},
            "exclude_columns": ["site"],
        },
        tmp_path,
    )
    assert cohort.delimiter == "\t"
    assert cohort.missing_values == ("-9",)
    assert cohort.referenced_columns() == {"id", "gender", "site"}


def test_to_dict(tmp_path: Path) -> None:
    """Test the settings echo."""
    config = RunConfig.from_dict(fast_config(tmp_path / "c.csv", tmp_path / "out"), tmp_path)
    echo = config.to_dict()
    assert "output_dir" not in echo
    assert echo["pairs"] == [["LATE", "AD"], ["AD", "Control"], ["LATE+AD", "LATE"]]
    assert echo["strata"] == ["all", "sex=Male", "race=Black"]
    assert echo["label_rule"] == {
        "ad": "(braak >= 4) and (cerad >= 2)",
        "late": "tdp_stage >= 1",
        "identifier": "braak-cerad-tdp",
    }
    assert json.loads(json.dumps(echo)) == echo
    elsewhere = RunConfig.from_dict(fast_config(tmp_path / "c.csv", tmp_path / "other"), tmp_path)
    assert elsewhere.to_dict() == echo


def test_resolve_learners() -> None:
    """Test that validation learners are distinct from the selection learner."""
    lda = LearnerSpec(LearnerKind.LDA)
    trees = LearnerSpec()
    assert resolve_learners([lda, trees, lda], trees) == [lda]
    assert resolve_learners(DEFAULT_VALIDATION, trees) == list(DEFAULT_VALIDATION)
