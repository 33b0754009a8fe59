"""Tests for the statistical battery."""

import itertools
import math
from pathlib import Path

import numpy as np
import pytest
from factorsel.balance_rank import RankingParams, rank_features
from factorsel.battery import (
    ANOVA_COLUMNS,
    CHI2_COLUMNS,
    LOGIT_COLUMNS,
    PVALUE_COLUMNS,
    StatisticKind,
    StatisticsEntry,
    check_unique_names,
    ranked_anova,
    run_entry,
    scenario_name,
)
from factorsel.cohort import Label, LabeledCohort, RawTable, label_rows, load_table
from factorsel.errors import ConfigError, SchemaError
from factorsel.infostats import anova_oneway, chi2_independence, contingency_table
from factorsel.label_rule import LabelRule
from factorsel.strata import BinaryTask
from factorsel.synthcohort import synth_schema, to_frame, write_cohort_csv

LATE_AD = (Label.LATE, Label.AD)


@pytest.fixture
def labeled(tmp_path: Path, small_cohort: LabeledCohort) -> tuple[RawTable, np.ndarray]:
    """The small cohort read back from CSV, with its labels."""
    path = write_cohort_csv(small_cohort, tmp_path / "cohort.csv")
    table = load_table(path, synth_schema())
    return table, label_rows(table, LabelRule.named("braak-cerad-tdp"))


def test_anova_entry(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test an ANOVA of a planted feature."""
    table, labels = labeled
    entry = StatisticsEntry("a", StatisticKind.ANOVA, ("x0", "x5"), (LATE_AD,))
    result = run_entry(entry, table, labels)
    assert list(result.columns) == ANOVA_COLUMNS
    assert result["variable"].tolist() == ["x0", "x5"]
    assert result["scenario"].tolist() == ["LATE vs AD"] * 2
    assert result["status"].tolist() == ["ok", "ok"]
    assert result["n"].tolist() == [120, 120]
    assert result["p_value"].iloc[0] < 1e-6
    x0 = table.column("x0").astype(float)
    expected = anova_oneway([x0[labels == Label.LATE], x0[labels == Label.AD]])
    assert result["f_statistic"].iloc[0] == pytest.approx(expected.statistic)
    assert (result["dof"].iloc[0], result["dof2"].iloc[0]) == (1, 118)


def test_chi2_entry(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test a chi-square test of a text column across three classes."""
    table, labels = labeled
    entry = StatisticsEntry(
        "sex", StatisticKind.CHI2, ("sex",), ((Label.LATE, Label.AD, Label.CONTROL),)
    )
    result = run_entry(entry, table, labels)
    assert result["status"].iloc[0] == "ok"
    assert result["dof"].iloc[0] == 2
    assert result["n"].iloc[0] == 200
    assert result["against"].iloc[0] == "(class)"
    assert 0.0 <= result["p_value"].iloc[0] <= 1.0


def test_chi2_entry_against_a_column(tmp_path: Path, small_cohort: LabeledCohort) -> None:
    """Test crossing two variables with a third inside every class pair."""
    rng = np.random.default_rng(12)
    frame = to_frame(small_cohort)
    n = len(frame)
    e4 = rng.integers(0, 2, n).astype(float)
    frame["apoe_e4"] = e4
    frame["alcdem"] = np.where(rng.uniform(size=n) < 0.8, e4, 1.0 - e4)
    frame["alcdemif"] = rng.integers(0, 2, n)
    frame.loc[0, "apoe_e4"] = math.nan
    path = tmp_path / "cohort.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    table = load_table(path, synth_schema())
    labels = label_rows(table, LabelRule.named("braak-cerad-tdp"))

    pairs = tuple(itertools.combinations(Label, 2))
    entry = StatisticsEntry(
        "e4", StatisticKind.CHI2, ("alcdem", "alcdemif"), pairs, against="apoe_e4"
    )
    assert entry.columns() == {"alcdem", "alcdemif", "apoe_e4"}
    result = run_entry(entry, table, labels)
    assert list(result.columns) == CHI2_COLUMNS
    assert len(result) == 12
    assert result["scenario"].tolist() == [scenario_name(p) for p in pairs for _ in range(2)]
    assert result["variable"].tolist() == ["alcdem", "alcdemif"] * 6
    assert (result["against"] == "apoe_e4").all()
    assert (result["status"] == "ok").all()
    assert (result["dof"] == 1).all()
    assert (result.loc[result["variable"] == "alcdem", "p_value"] < 1e-3).all()

    complete = ~table.missing_mask["apoe_e4"].to_numpy()
    for i, pair in enumerate(pairs):
        mask = np.isin(labels, [int(c) for c in pair]) & complete
        assert result["n"].iloc[2 * i] == mask.sum()
        expected = chi2_independence(
            contingency_table(table.column("alcdem")[mask], table.column("apoe_e4")[mask])
        )
        assert result["chi2"].iloc[2 * i] == pytest.approx(expected.statistic)

    single = StatisticsEntry(
        "e4_control", StatisticKind.CHI2, ("alcdem",), ((Label.CONTROL,),), against="apoe_e4"
    )
    assert run_entry(single, table, labels)["status"].iloc[0] == "ok"


def test_chi2_entry_against_errors(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test misplaced and unknown against columns."""
    table, labels = labeled
    with pytest.raises(ConfigError):
        StatisticsEntry("a", StatisticKind.ANOVA, ("x0",), (LATE_AD,), against="sex")
    with pytest.raises(ConfigError):
        StatisticsEntry("a", StatisticKind.CHI2, ("sex",), (LATE_AD,), against="sex")
    with pytest.raises(ConfigError):
        StatisticsEntry("a", StatisticKind.CHI2, ("sex",), ((Label.AD,),))
    entry = StatisticsEntry("a", StatisticKind.CHI2, ("sex",), (LATE_AD,), against="apoe")
    with pytest.raises(SchemaError):
        run_entry(entry, table, labels)
    parsed = StatisticsEntry.from_dict(
        {"name": "a", "kind": "chi2", "variables": ["sex"], "scenarios": ["AD"], "against": "race"}
    )
    assert parsed.against == "race"
    assert run_entry(parsed, table, labels)["against"].iloc[0] == "race"


def test_logit_entry(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test a logistic regression with the first class as outcome."""
    table, labels = labeled
    entry = StatisticsEntry("lr", StatisticKind.LOGIT, ("x0", "x2"), (LATE_AD,))
    result = run_entry(entry, table, labels)
    assert list(result.columns) == LOGIT_COLUMNS
    assert result["term"].tolist() == ["(intercept)", "x0", "x2"]
    assert (result["status"] == "ok").all()
    # LATE has the higher x0, so its odds grow with x0.
    assert result["odds_ratio"].iloc[1] > 1.0
    assert result["wald_p"].iloc[1] < 1e-3
    assert result["llr"].nunique() == 1


def test_describe_entry_with_filter(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test descriptives restricted by a filter expression."""
    table, labels = labeled
    entry = StatisticsEntry(
        "d", StatisticKind.DESCRIBE, ("x0",), ((Label.LATE, Label.AD),), "race == 'White'"
    )
    result = run_entry(entry, table, labels)
    assert result["group"].tolist() == ["LATE", "AD"]
    white = table.column("race") == "White"
    late = white & (labels == Label.LATE)
    assert result["n"].iloc[0] == late.sum()
    values = table.column("x0").astype(float)[late]
    assert result["mean"].iloc[0] == pytest.approx(values.mean())
    assert result["sd"].iloc[0] == pytest.approx(values.std(ddof=1))


def test_failures_become_rows(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test that analysis errors are reported in place."""
    table, labels = labeled
    anova = StatisticsEntry("e", StatisticKind.ANOVA, ("x0",), (LATE_AD,), "age > 200")
    result = run_entry(anova, table, labels)
    assert result["status"].iloc[0].startswith("error: ValueError")
    assert result["n"].iloc[0] == 0
    assert math.isnan(result["f_statistic"].iloc[0])

    logit = StatisticsEntry("l", StatisticKind.LOGIT, ("x0",), (LATE_AD,), "age > 200")
    result = run_entry(logit, table, labels)
    assert result["term"].tolist() == ["(intercept)", "x0"]
    assert all(s.startswith("error:") for s in result["status"])

    describe = StatisticsEntry("d", StatisticKind.DESCRIBE, ("x0",), ((Label.LATE,),), "age > 200")
    result = run_entry(describe, table, labels)
    assert result["n"].tolist() == [0]
    assert math.isnan(result["mean"].iloc[0])


def test_schema_errors(labeled: tuple[RawTable, np.ndarray]) -> None:
    """Test entries that cannot run on the table."""
    table, labels = labeled
    bad_entries = [
        StatisticsEntry("u", StatisticKind.ANOVA, ("weight",), (LATE_AD,)),
        StatisticsEntry("t", StatisticKind.ANOVA, ("race",), (LATE_AD,)),
        StatisticsEntry("w", StatisticKind.ANOVA, ("x0",), (LATE_AD,), "site == 1"),
    ]
    for entry in bad_entries:
        with pytest.raises(SchemaError):
            run_entry(entry, table, labels)
    with pytest.raises(ValueError):
        run_entry(bad_entries[0], table, labels[:-1])


def test_missing_values_dropped_per_entry(tmp_path: Path) -> None:
    """Test that rows missing an analyzed value are left out."""
    path = tmp_path / "t.csv"
    path.write_text(
        "braak,cerad,tdp_stage,v,w\n"
        "5,3,0,1.0,1\n5,3,0,2.0,NA\n5,3,0,NA,3\n"
        "1,1,2,4.0,4\n1,1,2,5.0,5\n1,1,2,6.0,6\n",
        encoding="utf-8",
    )
    table = load_table(path, {})
    labels = label_rows(table, LabelRule.named("braak-cerad-tdp"))
    one = StatisticsEntry("v", StatisticKind.ANOVA, ("v",), ((Label.AD, Label.LATE),))
    assert run_entry(one, table, labels)["n"].tolist() == [5]
    both = StatisticsEntry("vw", StatisticKind.ANOVA, ("v", "w"), ((Label.AD, Label.LATE),))
    assert run_entry(both, table, labels)["n"].tolist() == [4, 4]


def test_ranked_anova(late_vs_ad: BinaryTask) -> None:
    """Test per-feature p-values in rank order."""
    ranking = rank_features(late_vs_ad, RankingParams(max_iters=10, patience=3, top_d=2))
    table = ranked_anova(late_vs_ad, ranking)
    assert list(table.columns) == PVALUE_COLUMNS
    assert table["rank"].tolist() == list(range(1, late_vs_ad.m + 1))
    assert table["feature"].tolist() == ranking.ranked_names()
    assert table["p_value"].iloc[0] < 1e-6


def test_entry_from_dict() -> None:
    """Test reading entries from configuration."""
    entry = StatisticsEntry.from_dict(
        {
            "name": "demo_1",
            "kind": "Describe",
            "variables": ["x0"],
            "scenarios": ["Control", ["LATE+AD", "ad"]],
            "where": "sex == 'Male'",
        }
    )
    assert entry.kind is StatisticKind.DESCRIBE
    assert entry.scenarios == ((Label.CONTROL,), (Label.LATE_AD, Label.AD))
    assert entry.columns() == {"x0", "sex"}
    assert scenario_name(entry.scenarios[1]) == "LATE+AD vs AD"
    bad_entries = [
        {"name": "a b", "kind": "anova", "variables": ["x"], "scenarios": [["LATE", "AD"]]},
        {"name": "a", "kind": "ttest", "variables": ["x"], "scenarios": [["LATE", "AD"]]},
        {"name": "a", "kind": "anova", "variables": [], "scenarios": [["LATE", "AD"]]},
        {"name": "a", "kind": "anova", "variables": ["x"], "scenarios": ["LATE"]},
        {"name": "a", "kind": "logit", "variables": ["x"], "scenarios": [["LATE", "AD", "Control"]]},
        {"name": "a", "kind": "chi2", "variables": ["x"], "scenarios": [["LATE", "LATE"]]},
        {"name": "a", "kind": "anova", "variables": ["x"], "scenarios": [["LATE", "FTD"]]},
        {"name": "a", "kind": "anova", "variables": ["x"], "scenarios": [["LATE", "AD"]], "where": "x >"},
        {"name": "a", "kind": "anova", "variables": "x", "scenarios": [["LATE", "AD"]]},
    ]
    for data in bad_entries:
        with pytest.raises(ConfigError):
            StatisticsEntry.from_dict(data)  # type: ignore[arg-type]


def test_check_unique_names() -> None:
    """Test that entry names identify output files."""
    entry = StatisticsEntry("a", StatisticKind.ANOVA, ("x",), (LATE_AD,))
    check_unique_names([entry])
    with pytest.raises(ConfigError):
        check_unique_names([entry, entry])
