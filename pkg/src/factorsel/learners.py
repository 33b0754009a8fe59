"""Binary classifiers used to evaluate and validate feature subsets.

Three learners share one fit/score interface:

- EXTRA_TREES: an ensemble of extremely randomized trees. Each split draws k
  candidate features and a uniform random cut point for each, then keeps the
  candidate with the largest Gini impurity decrease. Trees are unpruned.
- LDA: two-class linear discriminant analysis with a pooled covariance.
- MLP: a feed-forward network with a sigmoid output trained by mini-batch
  gradient descent on the logistic loss.

Every fit is deterministic given its seed.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed
from scipy.special import expit

from factorsel.errors import (
    ConfigError,
    DegenerateFitError,
    ShapeError,
    SingularCovarianceError,
)

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

# Ridge escalation for LDA: up to RIDGE_LEVELS tenfold increases.
RIDGE_LEVELS = 8
MAX_CONDITION = 1e12


class LearnerKind(Enum):
    """The available learners."""

    EXTRA_TREES = "extra_trees"
    LDA = "lda"
    MLP = "mlp"


@dataclass(frozen=True)
class ExtraTreesParams:
    """Settings for the extremely randomized trees ensemble.

    Attributes:
        n_trees: ensemble size
        min_split: nodes with fewer rows become leaves
        k_candidate_features: candidate features per split, or "sqrt" for
            the rounded-up square root of the feature count
        n_jobs: worker processes for building trees

    """

    n_trees: int = 100
    min_split: int = 2
    k_candidate_features: int | str = "sqrt"
    n_jobs: int = 1

    def __post_init__(self) -> None:
        """Validate the settings."""
        if self.n_trees < 1:
            raise ConfigError("n_trees must be at least 1")
        if self.min_split < 2:
            raise ConfigError("min_split must be at least 2")
        if isinstance(self.k_candidate_features, str):
            if self.k_candidate_features != "sqrt":
                raise ConfigError("k_candidate_features must be a count or 'sqrt'")
        elif self.k_candidate_features < 1:
            raise ConfigError("k_candidate_features must be at least 1")

    def candidates(self, m: int) -> int:
        """Return the number of candidate features for m features."""
        if self.k_candidate_features == "sqrt":
            return max(1, math.ceil(math.sqrt(m)))
        assert isinstance(self.k_candidate_features, int)
        return min(self.k_candidate_features, m)


@dataclass(frozen=True)
class MLPParams:
    """Settings for the multilayer perceptron.

    Attributes:
        hidden_sizes: units in each hidden layer; empty for logistic regression
        activation: "relu" or "tanh"
        epochs: passes over the training data
        learning_rate: gradient step size
        l2: weight decay on the weight matrices (not the biases)
        batch_size: rows per mini-batch; 0 means full batch

    """

    hidden_sizes: tuple[int, ...] = (16,)
    activation: str = "relu"
    epochs: int = 200
    learning_rate: float = 0.01
    l2: float = 1e-4
    batch_size: int = 32

    def __post_init__(self) -> None:
        """Validate the settings."""
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden layer sizes must be at least 1")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError("activation must be 'relu' or 'tanh'")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise ConfigError("learning_rate must be positive and l2 non-negative")
        if self.epochs < 1 or self.batch_size < 0:
            raise ConfigError("epochs must be positive and batch_size non-negative")


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to fit and how.

    Attributes:
        kind: the learner
        extra_trees: settings used when kind is EXTRA_TREES
        mlp: settings used when kind is MLP
        lda_ridge: initial relative ridge added to a singular LDA covariance

    """

    kind: LearnerKind = LearnerKind.EXTRA_TREES
    extra_trees: ExtraTreesParams = field(default_factory=ExtraTreesParams)
    mlp: MLPParams = field(default_factory=MLPParams)
    lda_ridge: float = 1e-6

    @property
    def name(self) -> str:
        """Return the learner's short name."""
        return self.kind.value

    @classmethod
    def from_dict(cls, data: dict[str, object] | str) -> "LearnerSpec":
        """Create an instance from a kind name or a dictionary.

        Args:
            data: "extra_trees", "lda" or "mlp", or a dictionary with "kind"
                and optional "extra_trees", "mlp" and "lda_ridge" entries

        Raises:
            ConfigError: unknown kind or invalid settings

        """
        if isinstance(data, str):
            data = {"kind": data}
        kind = data.get("kind", LearnerKind.EXTRA_TREES.value)
        try:
            learner = LearnerKind(str(kind).lower())
        except ValueError:
            raise ConfigError(f"Unknown learner kind: {kind!r}") from None
        trees = data.get("extra_trees", {})
        mlp = data.get("mlp", {})
        ridge = data.get("lda_ridge", 1e-6)
        if not isinstance(trees, dict) or not isinstance(mlp, dict):
            raise ConfigError("learner settings must be objects")
        if not isinstance(ridge, (int, float)):
            raise ConfigError("lda_ridge must be a number")
        try:
            trees_params = ExtraTreesParams(**trees)
            if "hidden_sizes" in mlp:
                mlp = {**mlp, "hidden_sizes": tuple(mlp["hidden_sizes"])}
            mlp_params = MLPParams(**mlp)
        except TypeError as e:
            raise ConfigError(f"Invalid learner settings: {e}") from None
        return cls(learner, trees_params, mlp_params, float(ridge))


class FittedModel:
    """A trained model that scores rows by their affinity to the positive class.

    Attributes:
        kind: the learner that produced the model
        n_features: number of columns seen in training
        seed: the seed used for fitting

    """

    kind: LearnerKind
    n_features: int
    seed: int

    def score(self, X: FloatArray) -> FloatArray:
        """Return one positive-class score per row."""
        raise NotImplementedError

    def _check(self, X: npt.ArrayLike) -> FloatArray:
        array = np.asarray(X, dtype=float)
        if array.ndim != 2 or array.shape[1] != self.n_features:
            raise ShapeError(
                f"expected {self.n_features} columns, got shape {array.shape}"
            )
        return array


@dataclass(frozen=True)
class Tree:
    """An array-encoded binary tree.

    Internal nodes send rows with ``x[feature] < threshold`` left. Leaves have
    feature -1 and hold the positive fraction of their training rows.
    """

    feature: npt.NDArray[np.intp]
    threshold: FloatArray
    left: npt.NDArray[np.intp]
    right: npt.NDArray[np.intp]
    value: FloatArray

    def apply(self, X: FloatArray) -> npt.NDArray[np.intp]:
        """Return the leaf reached by every row."""
        node = np.zeros(len(X), dtype=np.intp)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            go_left = X[idx, self.feature[current]] < self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: FloatArray) -> FloatArray:
        """Return the positive fraction of the leaf reached by every row."""
        return self.value[self.apply(X)]


def _gini(positives: FloatArray, totals: FloatArray) -> FloatArray:
    p = np.divide(positives, totals, out=np.zeros_like(positives), where=totals > 0)
    return 2.0 * p * (1.0 - p)


def build_tree(
    X: FloatArray, y: npt.NDArray[np.integer], params: ExtraTreesParams, seed: int
) -> Tree:
    """Grow one unpruned extremely randomized tree."""
    rng = np.random.default_rng(seed)
    k = params.candidates(X.shape[1])
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(rows: npt.NDArray[np.intp]) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    while stack:
        node, rows = stack.pop()
        labels = y[rows]
        positives = float(labels.sum())
        if len(rows) < params.min_split or positives in (0.0, float(len(rows))):
            continue
        block = X[rows]
        lows = block.min(axis=0)
        highs = block.max(axis=0)
        usable = np.flatnonzero(highs > lows)
        if len(usable) == 0:
            continue
        candidates = rng.choice(usable, size=min(k, len(usable)), replace=False)
        cuts = rng.uniform(lows[candidates], highs[candidates])
        goes_left = block[:, candidates] < cuts
        n_left = goes_left.sum(axis=0).astype(float)
        pos_left = (goes_left * labels[:, None]).sum(axis=0).astype(float)
        n_right = len(rows) - n_left
        pos_right = positives - pos_left
        impurity = (
            n_left * _gini(pos_left, n_left) + n_right * _gini(pos_right, n_right)
        ) / len(rows)
        impurity[(n_left == 0) | (n_right == 0)] = np.inf
        best = int(np.argmin(impurity))
        if not np.isfinite(impurity[best]):
            continue
        mask = goes_left[:, best]
        left_rows, right_rows = rows[mask], rows[~mask]
        feature[node] = int(candidates[best])
        threshold[node] = float(cuts[best])
        left_id = new_node(left_rows)
        right_id = new_node(right_rows)
        left[node], right[node] = left_id, right_id
        stack.append((right_id, right_rows))
        stack.append((left_id, left_rows))

    return Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value),
    )


@dataclass(frozen=True)
class ExtraTreesModel(FittedModel):
    """A fitted extremely randomized trees ensemble."""

    trees: tuple[Tree, ...]
    n_features: int
    seed: int
    kind: LearnerKind = LearnerKind.EXTRA_TREES

    def score(self, X: FloatArray) -> FloatArray:
        """Return the mean over trees of the reached leaf's positive fraction."""
        data = self._check(X)
        return np.mean([tree.predict(data) for tree in self.trees], axis=0)


@dataclass(frozen=True)
class LDAModel(FittedModel):
    """A fitted two-class linear discriminant.

    score(x) = w·x - c, where w solves the pooled-covariance system for the
    difference of class means and c places the boundary according to the
    class priors.
    """

    direction: FloatArray
    offset: float
    ridge: float
    n_features: int
    seed: int
    kind: LearnerKind = LearnerKind.LDA

    def score(self, X: FloatArray) -> FloatArray:
        """Return the signed projection distance from the decision boundary."""
        return np.asarray(self._check(X) @ self.direction - self.offset, dtype=float)


def _activate(z: FloatArray, activation: str) -> FloatArray:
    return np.maximum(z, 0.0) if activation == "relu" else np.tanh(z)


def _activate_grad(z: FloatArray, a: FloatArray, activation: str) -> FloatArray:
    return (z > 0).astype(float) if activation == "relu" else 1.0 - a * a


@dataclass(frozen=True)
class MLPModel(FittedModel):
    """A fitted multilayer perceptron.

    Inputs are standardized with the training mean and scale before the
    first layer.

    Attributes:
        weights: one matrix per layer, the last with a single output column
        biases: one vector per layer
        activation: hidden-layer activation
        mean: training column means
        scale: training column standard deviations (1 where constant)
        losses: full-batch training loss after each epoch

    """

    weights: tuple[FloatArray, ...]
    biases: tuple[FloatArray, ...]
    activation: str
    mean: FloatArray
    scale: FloatArray
    n_features: int
    seed: int
    losses: tuple[float, ...] = ()
    kind: LearnerKind = LearnerKind.MLP

    def score(self, X: FloatArray) -> FloatArray:
        """Return the sigmoid output for every row."""
        data = (self._check(X) - self.mean) / self.scale
        logits = _forward(list(self.weights), list(self.biases), data, self.activation)[-1][0]
        return np.asarray(expit(logits[:, 0]), dtype=float)


def _forward(
    weights: Sequence[FloatArray],
    biases: Sequence[FloatArray],
    X: FloatArray,
    activation: str,
) -> list[tuple[FloatArray, FloatArray]]:
    """Return (pre-activation, activation) per layer; the last is (logit, logit)."""
    layers = []
    a = X
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        a = z if i == len(weights) - 1 else _activate(z, activation)
        layers.append((z, a))
    return layers


def mlp_loss_and_gradients(
    weights: Sequence[FloatArray],
    biases: Sequence[FloatArray],
    X: FloatArray,
    y: npt.NDArray[np.integer] | FloatArray,
    activation: str,
    l2: float,
) -> tuple[float, list[FloatArray], list[FloatArray]]:
    """Return the regularized mean logistic loss and its gradients.

    loss = mean(log(1 + exp(z)) - y·z) + l2/2 · Σ‖W‖², with z the output logit.
    """
    layers = _forward(weights, biases, X, activation)
    logits = layers[-1][0][:, 0]
    target = np.asarray(y, dtype=float)
    n = len(target)
    loss = float(np.mean(np.logaddexp(0.0, logits) - target * logits))
    loss += 0.5 * l2 * sum(float(np.sum(w * w)) for w in weights)

    grad_w: list[FloatArray] = [np.zeros_like(w) for w in weights]
    grad_b: list[FloatArray] = [np.zeros_like(b) for b in biases]
    delta = ((expit(logits) - target) / n)[:, None]
    for i in range(len(weights) - 1, -1, -1):
        previous = X if i == 0 else layers[i - 1][1]
        grad_w[i] = previous.T @ delta + l2 * weights[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            z, a = layers[i - 1]
            delta = (delta @ weights[i].T) * _activate_grad(z, a, activation)
    return loss, grad_w, grad_b


def _fit_mlp(
    params: MLPParams, X: FloatArray, y: npt.NDArray[np.integer], seed: int
) -> MLPModel:
    rng = np.random.default_rng(seed)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    data = (X - mean) / scale
    sizes = [X.shape[1], *params.hidden_sizes, 1]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))

    n = len(y)
    batch = n if params.batch_size == 0 else min(params.batch_size, n)
    losses = []
    for _ in range(params.epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            _, grad_w, grad_b = mlp_loss_and_gradients(
                weights, biases, data[rows], y[rows], params.activation, params.l2
            )
            for i in range(len(weights)):
                weights[i] = weights[i] - params.learning_rate * grad_w[i]
                biases[i] = biases[i] - params.learning_rate * grad_b[i]
        loss, _, _ = mlp_loss_and_gradients(
            weights, biases, data, y, params.activation, params.l2
        )
        losses.append(loss)
    return MLPModel(
        weights=tuple(weights),
        biases=tuple(biases),
        activation=params.activation,
        mean=mean,
        scale=scale,
        n_features=X.shape[1],
        seed=seed,
        losses=tuple(losses),
    )


def _well_conditioned(system: FloatArray) -> bool:
    return bool(
        np.linalg.matrix_rank(system) == len(system)
        and np.linalg.cond(system) < MAX_CONDITION
    )


def _fit_lda(
    ridge: float, X: FloatArray, y: npt.NDArray[np.integer], seed: int
) -> LDAModel:
    positives = X[y == 1]
    negatives = X[y == 0]
    mu1 = positives.mean(axis=0)
    mu0 = negatives.mean(axis=0)
    scatter = (positives - mu1).T @ (positives - mu1) + (negatives - mu0).T @ (
        negatives - mu0
    )
    dof = max(len(y) - 2, 1)
    covariance = np.atleast_2d(scatter / dof)
    m = X.shape[1]
    scale = float(np.trace(covariance)) / m
    if scale <= 0:
        raise SingularCovarianceError("every feature has zero within-class variance")

    applied = 0.0
    system = covariance
    level = 0
    while not _well_conditioned(system):
        if level == RIDGE_LEVELS or ridge <= 0:
            raise SingularCovarianceError("covariance is singular after ridge escalation")
        applied = ridge * scale * 10.0**level
        system = covariance + applied * np.eye(m)
        logger.debug("LDA covariance singular; ridge %.3g", applied)
        level += 1

    direction = np.linalg.solve(system, mu1 - mu0)
    prior = len(positives) / len(y)
    offset = float(direction @ (mu0 + mu1) / 2.0 - math.log(prior / (1.0 - prior)))
    return LDAModel(direction, offset, applied, m, seed)


def fit(
    spec: LearnerSpec,
    X: npt.ArrayLike,
    y: npt.ArrayLike,
    seed: int,
) -> FittedModel:
    """Train a learner.

    Args:
        spec: which learner and its settings
        X: n × m training matrix without missing values
        y: binary labels
        seed: seed for every random choice made during fitting

    Raises:
        DegenerateFitError: fewer than two rows or a single class
        SingularCovarianceError: LDA covariance cannot be regularized
        ValueError: X contains NaN or does not match y

    """
    data = np.asarray(X, dtype=float)
    labels = np.asarray(y).astype(np.int8).reshape(-1)
    if data.ndim != 2 or len(data) != len(labels):
        raise ValueError("training matrix does not match labels")
    if np.isnan(data).any():
        raise ValueError("training matrix contains missing values")
    if len(labels) < 2 or labels.min() == labels.max():
        raise DegenerateFitError("training labels need both classes")

    if spec.kind is LearnerKind.LDA:
        return _fit_lda(spec.lda_ridge, data, labels, seed)
    if spec.kind is LearnerKind.MLP:
        return _fit_mlp(spec.mlp, data, labels, seed)

    params = spec.extra_trees
    seeds = np.random.SeedSequence(seed % 2**64).generate_state(
        params.n_trees, dtype=np.uint64
    )
    if params.n_jobs == 1:
        trees = [build_tree(data, labels, params, int(s)) for s in seeds]
    else:
        trees = Parallel(n_jobs=params.n_jobs)(
            delayed(build_tree)(data, labels, params, int(s)) for s in seeds
        )
    return ExtraTreesModel(tuple(trees), data.shape[1], seed)


def score(model: FittedModel, X: npt.ArrayLike) -> FloatArray:
    """Return per-row positive-class scores.

    Raises:
        ShapeError: X has a different column count from the training data

    """
    return model.score(np.asarray(X, dtype=float))
