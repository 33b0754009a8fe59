"""Mutual information estimators and the statistical verification battery.

Feature scoring uses either the plug-in estimator on the empirical joint
distribution (discrete features) or a k-nearest-neighbor estimator for a
continuous feature against a discrete class. The verification battery holds
one-way ANOVA, the chi-square test of independence and logistic regression
fitted by iteratively reweighted least squares.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree
from scipy.special import expit

from factorsel.errors import (
    CollinearityError,
    ConfigError,
    DegenerateFitError,
    DegenerateTableError,
    EstimatorError,
    SeparationError,
)
from factorsel.special import (
    chi2_sf,
    digamma,
    digamma_array,
    f_sf,
    normal_two_sided_p,
)

logger = logging.getLogger(__name__)

Z_975 = 1.959964


class MIMode(Enum):
    """Which MI estimator scores a feature."""

    AUTO = "auto"
    DISCRETE_PLUGIN = "discrete_plugin"
    KNN = "knn"


@dataclass(frozen=True)
class MIConfig:
    """Settings for mutual information scoring.

    Attributes:
        mode: estimator to use; AUTO picks the plug-in estimator for features
            with at most discrete_threshold distinct values and k-NN otherwise
        k_neighbors: neighbors for the k-NN estimator
        discrete_threshold: distinct-value limit for treating a feature as
            discrete in AUTO mode

    """

    mode: MIMode = MIMode.AUTO
    k_neighbors: int = 3
    discrete_threshold: int = 16

    def __post_init__(self) -> None:
        """Validate the settings."""
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be at least 1")
        if self.discrete_threshold < 1:
            raise ConfigError("discrete_threshold must be at least 1")

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> "MIConfig":
        """Create an instance from a dictionary with optional keys."""
        defaults = cls()
        mode = data.get("mode", defaults.mode.value)
        k = data.get("k_neighbors", defaults.k_neighbors)
        threshold = data.get("discrete_threshold", defaults.discrete_threshold)
        if not isinstance(mode, str) or not isinstance(k, int) or not isinstance(
            threshold, int
        ):
            raise ConfigError("Invalid MI configuration")
        try:
            return cls(MIMode(mode.lower()), k, threshold)
        except ValueError:
            raise ConfigError(f"Unknown MI mode: {mode!r}") from None


def mi_discrete(x: npt.ArrayLike, y: npt.ArrayLike) -> float:
    """Return the plug-in mutual information of two discrete vectors, in nats.

    Every distinct value is a category, so the result does not depend on how
    categories are coded.

    Raises:
        EstimatorError: the vectors are empty or of different lengths

    """
    xs = np.asarray(x)
    ys = np.asarray(y)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) == 0:
        raise EstimatorError("mi_discrete needs two equal-length non-empty vectors")
    _, xi = np.unique(xs, return_inverse=True)
    _, yi = np.unique(ys, return_inverse=True)
    xi = xi.reshape(-1)
    yi = yi.reshape(-1)
    joint = np.zeros((int(xi.max()) + 1, int(yi.max()) + 1))
    np.add.at(joint, (xi, yi), 1.0)
    pxy = joint / len(xs)
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    outer = np.outer(px, py)
    mi = float(np.sum(pxy[nz] * np.log(pxy[nz] / outer[nz])))
    return max(mi, 0.0)


def mi_knn(x: npt.ArrayLike, y: npt.ArrayLike, k: int = 3) -> float:
    """Return the k-NN estimate of MI between a continuous x and a discrete y.

    For each point, the distance to its k-th nearest neighbor within its own
    class sets a radius; the number of points of any class strictly inside that
    radius then enters the digamma average. Negative estimates are clipped to
    zero.

    Raises:
        EstimatorError: fewer than k + 2 points, a single class, or a class
            with k or fewer points

    """
    xs = np.asarray(x, dtype=float).reshape(-1, 1)
    ys = np.asarray(y).reshape(-1)
    n = len(ys)
    if len(xs) != n:
        raise EstimatorError("x and y must have the same length")
    if k < 1 or n <= k + 1:
        raise EstimatorError(f"mi_knn needs more than k + 1 = {k + 1} points")
    classes, class_index, counts = np.unique(
        ys, return_inverse=True, return_counts=True
    )
    if len(classes) < 2:
        raise EstimatorError("mi_knn needs both classes")
    if counts.min() < k + 1:
        raise EstimatorError(f"every class needs at least k + 1 = {k + 1} points")

    radius = np.empty(n)
    for c in range(len(classes)):
        members = np.flatnonzero(class_index == c)
        tree = cKDTree(xs[members])
        distances, _ = tree.query(xs[members], k=k + 1, p=np.inf)
        radius[members] = distances[:, k]
    # Count points strictly closer than the k-th neighbor.
    radius = np.nextafter(radius, 0)
    counts_all = cKDTree(xs).query_ball_point(
        xs, r=radius, p=np.inf, return_length=True
    )
    mi = (
        digamma(n)
        + digamma(k)
        - float(np.mean(digamma_array(counts[class_index])))
        - float(np.mean(digamma_array(counts_all)))
    )
    return max(mi, 0.0)


def feature_modes(X: npt.NDArray[np.float64], config: MIConfig) -> list[MIMode]:
    """Resolve the estimator used for each column of X."""
    if config.mode is not MIMode.AUTO:
        return [config.mode] * X.shape[1]
    return [
        MIMode.DISCRETE_PLUGIN
        if len(np.unique(X[:, j])) <= config.discrete_threshold
        else MIMode.KNN
        for j in range(X.shape[1])
    ]


def score_features(
    X: npt.NDArray[np.float64],
    y: npt.NDArray[np.integer],
    config: MIConfig,
    modes: Sequence[MIMode] | None = None,
) -> npt.NDArray[np.float64]:
    """Score every column of X by its mutual information with y.

    Args:
        X: n × m feature matrix
        y: class labels
        config: estimator settings
        modes: per-column estimators; resolved from X when omitted

    """
    if modes is None:
        modes = feature_modes(X, config)
    scores = np.empty(X.shape[1])
    for j, mode in enumerate(modes):
        if mode is MIMode.KNN:
            scores[j] = mi_knn(X[:, j], y, config.k_neighbors)
        else:
            scores[j] = mi_discrete(X[:, j], y)
    return scores


class TestKind(Enum):
    """Which hypothesis test produced a TestResult."""

    __test__ = False

    ANOVA_F = "anova_f"
    CHI2 = "chi2"


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test.

    Attributes:
        statistic: F or chi-square statistic
        dof: (numerator) degrees of freedom
        p_value: upper-tail probability
        kind: the test
        dof2: denominator degrees of freedom for the F test
        degenerate: True if the statistic is infinite because there is no
            within-group variation

    """

    __test__ = False

    statistic: float
    dof: float
    p_value: float
    kind: TestKind
    dof2: float | None = None
    degenerate: bool = False

    def __post_init__(self) -> None:
        """Check the invariants."""
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")
        if self.dof <= 0:
            raise ValueError("degrees of freedom must be positive")


def anova_oneway(groups: Sequence[npt.ArrayLike]) -> TestResult:
    """Compare group means with the one-way analysis of variance F test.

    Raises:
        ValueError: fewer than two groups, an empty group, or no more values
            than groups

    """
    arrays = [np.asarray(g, dtype=float).reshape(-1) for g in groups]
    g = len(arrays)
    if g < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(len(a) == 0 for a in arrays):
        raise ValueError("ANOVA groups must be non-empty")
    n = sum(len(a) for a in arrays)
    if n <= g:
        raise ValueError("ANOVA needs more values than groups")
    grand = np.concatenate(arrays).mean()
    means = [a.mean() for a in arrays]
    ss_between = float(sum(len(a) * (mu - grand) ** 2 for a, mu in zip(arrays, means)))
    ss_within = float(sum(((a - mu) ** 2).sum() for a, mu in zip(arrays, means)))
    dfn, dfd = g - 1, n - g
    if ss_within == 0.0:
        if ss_between == 0.0:
            return TestResult(0.0, dfn, 1.0, TestKind.ANOVA_F, dfd)
        return TestResult(math.inf, dfn, 0.0, TestKind.ANOVA_F, dfd, degenerate=True)
    f = (ss_between / dfn) / (ss_within / dfd)
    return TestResult(f, dfn, f_sf(f, dfn, dfd), TestKind.ANOVA_F, dfd)


def contingency_table(
    values: npt.ArrayLike, groups: npt.ArrayLike
) -> npt.NDArray[np.float64]:
    """Count co-occurrences: one row per distinct value, one column per group."""
    _, vi = np.unique(np.asarray(values), return_inverse=True)
    _, gi = np.unique(np.asarray(groups), return_inverse=True)
    vi = vi.reshape(-1)
    gi = gi.reshape(-1)
    table = np.zeros((int(vi.max(initial=-1)) + 1, int(gi.max(initial=-1)) + 1))
    np.add.at(table, (vi, gi), 1.0)
    return table


def chi2_independence(table: npt.ArrayLike) -> TestResult:
    """Pearson's chi-square test of independence for an r × c count table.

    No continuity correction is applied.

    Raises:
        ValueError: negative counts or not a matrix
        DegenerateTableError: fewer than two rows or columns, or a zero margin

    """
    observed = np.asarray(table, dtype=float)
    if observed.ndim != 2:
        raise ValueError("chi-square needs a 2-D count table")
    if (observed < 0).any():
        raise ValueError("counts must be non-negative")
    r, c = observed.shape
    if r < 2 or c < 2:
        raise DegenerateTableError(f"a {r}×{c} table has no degrees of freedom")
    rows = observed.sum(axis=1)
    cols = observed.sum(axis=0)
    if (rows == 0).any() or (cols == 0).any():
        raise DegenerateTableError("every row and column needs a positive total")
    expected = np.outer(rows, cols) / observed.sum()
    statistic = float(((observed - expected) ** 2 / expected).sum())
    dof = (r - 1) * (c - 1)
    return TestResult(statistic, dof, chi2_sf(statistic, dof), TestKind.CHI2)


@dataclass(frozen=True)
class LogitFit:
    """A maximum-likelihood logistic regression fit.

    Attributes:
        names: covariate names, intercept first
        coefficients: log-odds coefficients
        standard_errors: from the inverse information matrix
        odds_ratios: exp(coefficients)
        ci_low: lower bounds of the two-sided 95% confidence intervals
        ci_high: upper bounds of the two-sided 95% confidence intervals
        wald_p: Wald test p-values
        llr_stat: likelihood-ratio statistic against the intercept-only model
        llr_p: p-value of llr_stat
        log_likelihood: maximized log-likelihood
        converged: whether a convergence criterion was met
        n_iter: IRLS iterations performed

    """

    names: tuple[str, ...]
    coefficients: npt.NDArray[np.float64]
    standard_errors: npt.NDArray[np.float64]
    odds_ratios: npt.NDArray[np.float64]
    ci_low: npt.NDArray[np.float64]
    ci_high: npt.NDArray[np.float64]
    wald_p: npt.NDArray[np.float64]
    llr_stat: float
    llr_p: float
    log_likelihood: float
    converged: bool
    n_iter: int = field(default=0)


def _log_likelihood(
    X: npt.NDArray[np.float64], y: npt.NDArray[np.float64], beta: npt.NDArray[np.float64]
) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logit_fit(
    X: npt.ArrayLike,
    y: npt.ArrayLike,
    names: Sequence[str] | None = None,
    max_iter: int = 100,
) -> LogitFit:
    """Fit a logistic regression by iteratively reweighted least squares.

    Args:
        X: n × p design matrix whose first column is the intercept (all ones)
        y: binary response
        names: covariate names; defaults to "const", "x1", "x2", ...
        max_iter: iteration cap

    Raises:
        ValueError: no intercept column, or n <= p
        DegenerateFitError: y has a single class
        CollinearityError: the design or information matrix is singular
        SeparationError: coefficients diverge or the fit separates the
            classes perfectly

    """
    design = np.asarray(X, dtype=float)
    response = np.asarray(y, dtype=float).reshape(-1)
    if design.ndim != 2 or len(design) != len(response):
        raise ValueError("design matrix does not match the response")
    n, p = design.shape
    if p == 0 or not np.all(design[:, 0] == 1.0):
        raise ValueError("the first design column must be the intercept")
    if n <= p:
        raise ValueError("logistic regression needs more rows than covariates")
    if not np.isin(response, (0.0, 1.0)).all():
        raise ValueError("the response must be binary")
    n1 = float(response.sum())
    if n1 == 0 or n1 == n:
        raise DegenerateFitError("the response has a single class")
    if np.linalg.matrix_rank(design) < p:
        raise CollinearityError("design matrix columns are linearly dependent")
    if names is None:
        names = ["const"] + [f"x{j}" for j in range(1, p)]
    if len(names) != p:
        raise ValueError("one name per design column is required")

    beta = np.zeros(p)
    ll = _log_likelihood(design, response, beta)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        mu = expit(design @ beta)
        weights = mu * (1.0 - mu)
        gradient = design.T @ (response - mu)
        information = design.T @ (design * weights[:, None])
        try:
            step = np.linalg.solve(information, gradient)
        except np.linalg.LinAlgError:
            raise CollinearityError("information matrix is singular") from None
        beta = beta + step
        if np.abs(beta).max() > 30.0:
            raise SeparationError("coefficients diverge; the classes are separable")
        ll_new = _log_likelihood(design, response, beta)
        gradient = design.T @ (response - expit(design @ beta))
        change = abs(ll_new - ll)
        ll = ll_new
        logger.debug("IRLS iteration %d: ll=%.10g change=%.3g", n_iter, ll, change)
        if np.abs(gradient).max() < 1e-8 or change < 1e-10:
            converged = True
            break
    if not converged:
        logger.warning("IRLS did not converge in %d iterations", max_iter)

    mu = expit(design @ beta)
    if np.abs(response - mu).max() < 1e-6:
        raise SeparationError("the fit separates the classes perfectly")
    information = design.T @ (design * (mu * (1.0 - mu))[:, None])
    try:
        covariance = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        raise CollinearityError("information matrix is singular") from None
    se = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.inf)
    wald_p = np.array([normal_two_sided_p(float(v)) for v in z])

    rate = n1 / n
    ll_null = n1 * math.log(rate) + (n - n1) * math.log(1.0 - rate)
    llr = max(0.0, 2.0 * (ll - ll_null))
    llr_p = chi2_sf(llr, p - 1) if p > 1 else 1.0
    return LogitFit(
        names=tuple(names),
        coefficients=beta,
        standard_errors=se,
        odds_ratios=np.exp(beta),
        ci_low=beta - Z_975 * se,
        ci_high=beta + Z_975 * se,
        wald_p=wald_p,
        llr_stat=llr,
        llr_p=llr_p,
        log_likelihood=ll,
        converged=converged,
        n_iter=n_iter,
    )


@dataclass(frozen=True)
class GroupSummary:
    """Descriptive statistics of one variable within one group."""

    group: str
    n: int
    mean: float
    sd: float


def describe_groups(
    values: npt.ArrayLike, groups: npt.ArrayLike, names: dict[int, str] | None = None
) -> list[GroupSummary]:
    """Return count, mean and sample standard deviation per group.

    Groups appear in ascending code order. A group with one value has sd NaN.
    """
    data = np.asarray(values, dtype=float)
    codes = np.asarray(groups)
    result = []
    for code in np.unique(codes):
        members = data[codes == code]
        label = names.get(int(code), str(code)) if names else str(code)
        sd = float(members.std(ddof=1)) if len(members) > 1 else math.nan
        result.append(GroupSummary(label, len(members), float(members.mean()), sd))
    return result
