"""Selection of the best prefix of a feature ranking.

Every prefix of the ranking (top-1, top-2, ...) is evaluated with a
classifier on stratified train/test splits, one per evaluation seed. The
prefix with the highest mean test AUROC is selected; ties go to the shorter
prefix.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed
from scipy.stats import rankdata

from factorsel.balance_rank import FeatureRanking, derive_seed, undersample_majority
from factorsel.errors import ConfigError, SplitError, UndefinedAUROCError
from factorsel.learners import LearnerSpec, fit, score
from factorsel.strata import BinaryTask

logger = logging.getLogger(__name__)

DEFAULT_EVAL_SEEDS = tuple(range(10))


def auroc(scores: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """Return the area under the ROC curve.

    This is the Mann-Whitney statistic: the fraction of (positive, negative)
    pairs in which the positive scores higher, with ties counting one half.

    Raises:
        UndefinedAUROCError: labels contain a single class
        ValueError: lengths differ

    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if len(s) != len(y):
        raise ValueError("scores and labels must have the same length")
    positive = y == 1
    n_pos = int(positive.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUROCError("AUROC needs both positive and negative labels")
    ranks = rankdata(s, method="average")
    u = float(ranks[positive].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class SelectionParams:
    """Settings for prefix evaluation.

    Attributes:
        test_fraction: share of each class held out for testing (alpha)
        eval_seeds: one split and fit per seed; AUROC is averaged over them
        classifier: learner used to evaluate prefixes
        max_subset_size: largest prefix evaluated; None means all features
        balance_training: under-sample the majority class of each training
            slice before fitting
        max_retries: extra seeds tried when a split leaves a slice with one class
        n_jobs: worker processes for (prefix, seed) evaluations

    """

    test_fraction: float = 0.2
    eval_seeds: tuple[int, ...] = DEFAULT_EVAL_SEEDS
    classifier: LearnerSpec = field(default_factory=LearnerSpec)
    max_subset_size: int | None = None
    balance_training: bool = False
    max_retries: int = 10
    n_jobs: int = 1

    def __post_init__(self) -> None:
        """Validate the settings."""
        object.__setattr__(self, "eval_seeds", tuple(self.eval_seeds))
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie strictly between 0 and 1")
        if not self.eval_seeds:
            raise ConfigError("at least one evaluation seed is required")
        if self.max_subset_size is not None and self.max_subset_size < 1:
            raise ConfigError("max_subset_size must be at least 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "SelectionParams":
        """Create an instance from a dictionary with optional keys.

        "eval_seeds" may be a list of seeds or a count n meaning seeds 0..n-1.
        """
        defaults = cls()
        fraction = data.get("test_fraction", defaults.test_fraction)
        seeds = data.get("eval_seeds", list(defaults.eval_seeds))
        if isinstance(seeds, int) and not isinstance(seeds, bool):
            seeds = list(range(seeds))
        if not isinstance(fraction, (int, float)) or not isinstance(seeds, list):
            raise ConfigError("Invalid selection settings")
        if not all(isinstance(s, int) for s in seeds):
            raise ConfigError("eval_seeds must be integers")
        classifier = data.get("classifier", "extra_trees")
        if not isinstance(classifier, (str, dict)):
            raise ConfigError("classifier must be a name or an object")
        max_size = data.get("max_subset_size")
        retries = data.get("max_retries", defaults.max_retries)
        n_jobs = data.get("n_jobs", defaults.n_jobs)
        if max_size is not None and not isinstance(max_size, int):
            raise ConfigError("max_subset_size must be an integer")
        if not isinstance(retries, int) or not isinstance(n_jobs, int):
            raise ConfigError("max_retries and n_jobs must be integers")
        return cls(
            test_fraction=float(fraction),
            eval_seeds=tuple(seeds),
            classifier=LearnerSpec.from_dict(classifier),
            max_subset_size=max_size,
            balance_training=bool(data.get("balance_training", False)),
            max_retries=retries,
            n_jobs=n_jobs,
        )

    def with_classifier(self, classifier: LearnerSpec) -> "SelectionParams":
        """Return a copy that evaluates with another learner."""
        return SelectionParams(
            self.test_fraction,
            self.eval_seeds,
            classifier,
            self.max_subset_size,
            self.balance_training,
            self.max_retries,
            self.n_jobs,
        )


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of select_features.

    Attributes:
        ks: evaluated prefix sizes, 1..max_subset_size
        mean_auroc: mean test AUROC per prefix size
        sd_auroc: sample standard deviation across seeds (0 for one seed)
        per_seed: prefix × seed matrix of test AUROCs
        best_k: prefix size with the highest mean (smallest on ties)
        selected: the first best_k feature names in rank order
        selected_idx: their feature indices
        baseline_auroc: mean AUROC using all features
        learner: name of the evaluating learner
        eval_seeds: the seeds behind the columns of per_seed
        prefix_names: feature added at each prefix size, in rank order

    """

    ks: npt.NDArray[np.intp]
    mean_auroc: npt.NDArray[np.float64]
    sd_auroc: npt.NDArray[np.float64]
    per_seed: npt.NDArray[np.float64]
    best_k: int
    selected: tuple[str, ...]
    selected_idx: tuple[int, ...]
    baseline_auroc: float
    learner: str
    eval_seeds: tuple[int, ...] = ()
    prefix_names: tuple[str, ...] = ()

    @property
    def best_auroc(self) -> float:
        """Return the mean AUROC of the selected prefix."""
        return float(self.mean_auroc[self.best_k - 1])

    @property
    def improvement(self) -> float:
        """Return the AUROC gain over the all-features baseline, in AUROC points."""
        return self.best_auroc - self.baseline_auroc

    @property
    def relative_improvement(self) -> float:
        """Return the gain as a fraction of the baseline AUROC."""
        if self.baseline_auroc == 0:
            return float("nan")
        return self.improvement / self.baseline_auroc


def stratified_split(
    y: npt.NDArray[np.integer], test_fraction: float, seed: int
) -> tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]:
    """Split row indices into train and test, preserving class proportions.

    Each class contributes round(test_fraction × class size) rows to the test
    set, kept between 1 and class size − 1 when the class has at least two
    rows.

    Returns:
        Sorted train and test row indices

    """
    rng = np.random.default_rng(seed)
    train: list[npt.NDArray[np.intp]] = []
    test: list[npt.NDArray[np.intp]] = []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        n_test = int(round(test_fraction * len(members)))
        if len(members) >= 2:
            n_test = min(max(n_test, 1), len(members) - 1)
        shuffled = rng.permutation(members)
        test.append(shuffled[:n_test])
        train.append(shuffled[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def evaluate_subset(
    task: BinaryTask,
    feature_idx: Sequence[int],
    params: SelectionParams,
    seed: int,
) -> float:
    """Return the test AUROC of a learner trained on some of a task's features.

    A split that leaves either slice with one class is retried with seeds
    derived from seed, up to params.max_retries times.

    Raises:
        ValueError: feature_idx is empty or out of bounds
        SplitError: no usable split within the retry budget

    """
    columns = list(feature_idx)
    if not columns:
        raise ValueError("at least one feature is required")
    if min(columns) < 0 or max(columns) >= task.m:
        raise ValueError("feature index out of bounds")
    for attempt in range(params.max_retries + 1):
        split_seed = seed if attempt == 0 else derive_seed(seed, attempt)
        train, test = stratified_split(task.y, params.test_fraction, split_seed)
        if len(np.unique(task.y[test])) == 2 and len(np.unique(task.y[train])) == 2:
            break
        logger.debug("%s: split seed %d unusable, retrying", task, split_seed)
    else:
        raise SplitError(f"{task}: no split with both classes in train and test")

    training = task.subset(train)
    if params.balance_training:
        training = undersample_majority(training, derive_seed(split_seed, 1))
    model = fit(
        params.classifier,
        training.X[:, columns],
        training.y,
        derive_seed(split_seed, 2),
    )
    return auroc(score(model, task.X[test][:, columns]), task.y[test])


def auroc_curve(
    task: BinaryTask,
    order: Sequence[int],
    params: SelectionParams,
    max_k: int,
) -> npt.NDArray[np.float64]:
    """Evaluate prefixes 1..max_k of order on every seed.

    Returns:
        max_k × len(eval_seeds) matrix of test AUROCs

    """
    jobs = [(k, s) for k in range(1, max_k + 1) for s in params.eval_seeds]
    prefixes = [list(order[:k]) for k in range(1, max_k + 1)]
    if params.n_jobs == 1:
        values = [evaluate_subset(task, prefixes[k - 1], params, s) for k, s in jobs]
    else:
        values = Parallel(n_jobs=params.n_jobs)(
            delayed(evaluate_subset)(task, prefixes[k - 1], params, s) for k, s in jobs
        )
    return np.asarray(values, dtype=float).reshape(max_k, len(params.eval_seeds))


def select_features(
    task: BinaryTask, ranking: FeatureRanking, params: SelectionParams
) -> SelectionResult:
    """Pick the ranking prefix with the highest mean test AUROC.

    The same seeds, and so the same splits, are used for every prefix, and the
    baseline is the prefix containing every feature.

    Raises:
        ValueError: the ranking does not cover the task's features
        SplitError: propagated from evaluate_subset

    """
    if tuple(ranking.feature_names) != tuple(task.feature_names):
        raise ValueError("the ranking was computed for different features")
    m = task.m
    max_k = m if params.max_subset_size is None else min(params.max_subset_size, m)
    order = [int(j) for j in ranking.order]
    per_seed = auroc_curve(task, order, params, max_k)
    means = per_seed.mean(axis=1)
    sds = (
        per_seed.std(axis=1, ddof=1)
        if per_seed.shape[1] > 1
        else np.zeros(max_k)
    )
    best_k = int(np.argmax(means)) + 1
    if max_k == m:
        baseline = float(means[-1])
    else:
        baseline = float(
            np.mean([evaluate_subset(task, order, params, s) for s in params.eval_seeds])
        )
    selected_idx = tuple(order[:best_k])
    logger.info(
        "%s: best k=%d (AUROC %.3f vs %.3f with all features, %s)",
        task,
        best_k,
        means[best_k - 1],
        baseline,
        params.classifier.name,
    )
    return SelectionResult(
        ks=np.arange(1, max_k + 1, dtype=np.intp),
        mean_auroc=means,
        sd_auroc=sds,
        per_seed=per_seed,
        best_k=best_k,
        selected=tuple(task.feature_names[j] for j in selected_idx),
        selected_idx=selected_idx,
        baseline_auroc=baseline,
        learner=params.classifier.name,
        eval_seeds=params.eval_seeds,
        prefix_names=tuple(task.feature_names[j] for j in order[:max_k]),
    )
