"""factorsel selects the risk factors that best discriminate diagnostic classes.

Subjects are labeled into four classes from neuropathology scores, split into
two-class tasks within demographic strata, and, for every task with enough
subjects, features are ranked by mutual information over balanced
subsamples. The best-performing prefix of the ranking is then chosen by
cross-validated AUROC and checked with independent learners and classical
statistics.
"""

from factorsel.balance_rank import (
    FeatureRanking,
    RankingParams,
    StopReason,
    derive_seed,
    rank_features,
    undersample_majority,
)
from factorsel.battery import StatisticKind, StatisticsEntry, ranked_anova, run_entry
from factorsel.cohort import (
    ColumnType,
    Label,
    LabeledCohort,
    RawTable,
    StrataColumns,
    assign_labels,
    drop_incomplete,
    load_table,
)
from factorsel.config import CohortConfig, RunConfig
from factorsel.infostats import (
    LogitFit,
    MIConfig,
    MIMode,
    TestResult,
    anova_oneway,
    chi2_independence,
    logit_fit,
    mi_discrete,
    mi_knn,
)
from factorsel.label_rule import LabelRule
from factorsel.learners import LearnerKind, LearnerSpec, fit, score
from factorsel.pipeline import RunManifest, TaskRecord, TaskStatus, run_pipeline
from factorsel.report import ReportFormat, emit_report
from factorsel.strata import (
    AdequacyPolicy,
    BinaryTask,
    StratumSpec,
    enumerate_tasks,
    is_adequate,
    make_task,
    task_inventory,
)
from factorsel.subset_select import (
    SelectionParams,
    SelectionResult,
    auroc,
    evaluate_subset,
    select_features,
)

__all__ = [
    "AdequacyPolicy",
    "BinaryTask",
    "CohortConfig",
    "ColumnType",
    "FeatureRanking",
    "Label",
    "LabelRule",
    "LabeledCohort",
    "LearnerKind",
    "LearnerSpec",
    "LogitFit",
    "MIConfig",
    "MIMode",
    "RankingParams",
    "RawTable",
    "ReportFormat",
    "RunConfig",
    "RunManifest",
    "SelectionParams",
    "SelectionResult",
    "StatisticKind",
    "StatisticsEntry",
    "StopReason",
    "StrataColumns",
    "StratumSpec",
    "TaskRecord",
    "TaskStatus",
    "TestResult",
    "anova_oneway",
    "assign_labels",
    "auroc",
    "chi2_independence",
    "derive_seed",
    "drop_incomplete",
    "emit_report",
    "enumerate_tasks",
    "evaluate_subset",
    "fit",
    "is_adequate",
    "load_table",
    "logit_fit",
    "make_task",
    "mi_discrete",
    "mi_knn",
    "rank_features",
    "ranked_anova",
    "run_entry",
    "run_pipeline",
    "score",
    "select_features",
    "task_inventory",
    "undersample_majority",
]
