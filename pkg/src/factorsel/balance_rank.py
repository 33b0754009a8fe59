"""Feature ranking by an ensemble of balanced subsamples.

Each iteration pairs every minority-class row with an equal number of
majority rows drawn without replacement, scores every feature by mutual
information with the class on that subsample, and folds the scores into a
running mean. Iteration stops once the set of the top-d features has stayed
the same for a given number of consecutive iterations.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed

from factorsel.errors import ConfigError, DegenerateTaskError
from factorsel.infostats import MIConfig, MIMode, feature_modes, score_features
from factorsel.strata import BinaryTask

logger = logging.getLogger(__name__)

DEFAULT_TOP_D = 27


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a 64-bit seed from a master seed and an index path.

    The result depends only on the arguments, never on call order, so work
    can be scheduled in any order or in parallel.
    """
    sequence = np.random.SeedSequence(entropy=master_seed % 2**64, spawn_key=path)
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class StopReason(Enum):
    """Why ranking iterations stopped."""

    STABILIZED = "stabilized"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class RankingParams:
    """Settings for rank_features.

    Attributes:
        max_iters: iteration cap I
        top_d: size of the set watched for stability; None means
            min(27, number of features)
        patience: consecutive unchanged comparisons R that stop iteration
        master_seed: seed from which every iteration's seed is derived
        mi_config: mutual information settings
        ordered_top_d: compare the top-d as ordered lists instead of sets
        n_jobs: worker processes for scoring iterations (1 = sequential)

    """

    max_iters: int = 500
    top_d: int | None = None
    patience: int = 50
    master_seed: int = 0
    mi_config: MIConfig = field(default_factory=MIConfig)
    ordered_top_d: bool = False
    n_jobs: int = 1

    def __post_init__(self) -> None:
        """Validate the settings."""
        if self.max_iters < 1 or self.patience < 1:
            raise ConfigError("max_iters and patience must be at least 1")
        if self.top_d is not None and self.top_d < 1:
            raise ConfigError("top_d must be at least 1")

    def resolved_top_d(self, m: int) -> int:
        """Return top_d for a task with m features.

        Raises:
            ConfigError: an explicit top_d exceeds m

        """
        if self.top_d is None:
            return min(DEFAULT_TOP_D, m)
        if self.top_d > m:
            raise ConfigError(f"top_d={self.top_d} exceeds the {m} features")
        return self.top_d

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "RankingParams":
        """Create an instance from a dictionary with optional keys."""
        defaults = cls()

        def _int(key: str, default: int | None) -> int | None:
            val = data.get(key, default)
            if val is None:
                return None
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"ranking '{key}' must be an integer")
            return val

        mi = data.get("mi", {})
        if not isinstance(mi, dict):
            raise ConfigError("ranking 'mi' must be an object")
        max_iters = _int("max_iters", defaults.max_iters)
        patience = _int("patience", defaults.patience)
        seed = _int("master_seed", defaults.master_seed)
        n_jobs = _int("n_jobs", defaults.n_jobs)
        assert max_iters is not None and patience is not None
        assert seed is not None and n_jobs is not None
        return cls(
            max_iters=max_iters,
            top_d=_int("top_d", None),
            patience=patience,
            master_seed=seed,
            mi_config=MIConfig.from_dict(mi),
            ordered_top_d=bool(data.get("ordered_top_d", False)),
            n_jobs=n_jobs,
        )


@dataclass(frozen=True)
class FeatureRanking:
    """Result of rank_features.

    Attributes:
        feature_names: names of the task's features
        mean_scores: mean MI score of each feature over the iterations, in nats
        order: feature indices by descending mean score, ties by lower index
        iterations_run: number of iterations performed
        stop_reason: why iteration stopped
        top_d: size of the watched set
        history: the top-d features after each iteration (sorted indices, or
            ranked indices when ordered_top_d is set)
        iteration_scores: iterations_run × m matrix of per-iteration scores

    """

    feature_names: tuple[str, ...]
    mean_scores: npt.NDArray[np.float64]
    order: npt.NDArray[np.intp]
    iterations_run: int
    stop_reason: StopReason
    top_d: int
    history: tuple[tuple[int, ...], ...]
    iteration_scores: npt.NDArray[np.float64]

    def ranked_names(self) -> list[str]:
        """Return feature names in rank order."""
        return [self.feature_names[j] for j in self.order]

    def rank_of(self) -> npt.NDArray[np.intp]:
        """Return the 1-based rank of every feature."""
        ranks = np.empty(len(self.order), dtype=np.intp)
        ranks[self.order] = np.arange(1, len(self.order) + 1)
        return ranks


def _minority_majority(task: BinaryTask) -> tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]:
    positives = np.flatnonzero(task.y == 1)
    negatives = np.flatnonzero(task.y == 0)
    if len(positives) == 0 or len(negatives) == 0:
        raise DegenerateTaskError(f"{task} has a class with no rows")
    if len(positives) < len(negatives):
        return positives, negatives
    return negatives, positives


def undersample_majority(task: BinaryTask, seed: int) -> BinaryTask:
    """Return all minority rows plus an equal-size random sample of majority rows.

    The minority class is the smaller one whatever its label; with equal
    counts class2 is treated as the majority, so every row is kept.

    Raises:
        DegenerateTaskError: a class has no rows

    """
    minority, majority = _minority_majority(task)
    rng = np.random.default_rng(seed)
    sampled = np.sort(rng.choice(majority, size=len(minority), replace=False))
    return task.subset(np.sort(np.concatenate([minority, sampled])))


def descending_order(scores: npt.NDArray[np.float64]) -> npt.NDArray[np.intp]:
    """Sort indices by descending score, breaking ties by lower index."""
    return np.lexsort((np.arange(len(scores)), -scores)).astype(np.intp)


def _iteration_scores(
    task: BinaryTask,
    params: RankingParams,
    modes: list[MIMode],
    iteration: int,
) -> npt.NDArray[np.float64]:
    sample = undersample_majority(task, derive_seed(params.master_seed, iteration))
    return score_features(sample.X, sample.y, params.mi_config, modes)


def rank_features(task: BinaryTask, params: RankingParams) -> FeatureRanking:
    """Rank a task's features by mean MI over balanced subsamples.

    Iteration t draws its subsample with a seed derived from the master seed
    and t, so the result does not depend on n_jobs. The stop rule is applied
    in iteration order: after each iteration the current top-d is compared
    with the previous iteration's, and patience consecutive matches stop the
    run as STABILIZED.

    Raises:
        DegenerateTaskError: a class has no rows
        ConfigError: the task has no features or top_d exceeds them

    """
    m = task.m
    if m < 1:
        raise ConfigError(f"{task} has no features")
    _minority_majority(task)
    top_d = params.resolved_top_d(m)
    # Estimators are chosen once per task so every iteration scores a feature
    # the same way.
    modes = feature_modes(task.X, params.mi_config)

    chunk = 1 if params.n_jobs == 1 else 4 * max(params.n_jobs, 1)
    totals = np.zeros(m)
    rows: list[npt.NDArray[np.float64]] = []
    history: list[tuple[int, ...]] = []
    unchanged = 0
    stop_reason = StopReason.MAX_ITERS
    iteration = 0
    with Parallel(n_jobs=params.n_jobs) as parallel:
        while iteration < params.max_iters and stop_reason is StopReason.MAX_ITERS:
            batch = range(iteration, min(iteration + chunk, params.max_iters))
            if params.n_jobs == 1:
                results = [_iteration_scores(task, params, modes, t) for t in batch]
            else:
                results = parallel(
                    delayed(_iteration_scores)(task, params, modes, t) for t in batch
                )
            for scores in results:
                iteration += 1
                rows.append(scores)
                totals += scores
                order = descending_order(totals / iteration)
                top = (
                    tuple(int(j) for j in order[:top_d])
                    if params.ordered_top_d
                    else tuple(sorted(int(j) for j in order[:top_d]))
                )
                if history and top == history[-1]:
                    unchanged += 1
                else:
                    unchanged = 0
                history.append(top)
                if unchanged >= params.patience:
                    stop_reason = StopReason.STABILIZED
                    break
            logger.debug("%s: %d iterations, %d unchanged", task, iteration, unchanged)

    iteration_scores = np.vstack(rows)
    # The running mean the stop rule compared: order[:top_d] is history[-1].
    mean_scores = totals / iteration
    logger.info(
        "%s: ranking stopped after %d iterations (%s)",
        task,
        iteration,
        stop_reason.value,
    )
    return FeatureRanking(
        feature_names=task.feature_names,
        mean_scores=mean_scores,
        order=descending_order(mean_scores),
        iterations_run=iteration,
        stop_reason=stop_reason,
        top_d=top_d,
        history=tuple(history),
        iteration_scores=iteration_scores,
    )
