"""Special functions behind the p-values and the k-NN entropy terms.

Thin, domain-checked wrappers around ``scipy.special``, plus the upper-tail
probabilities of the F, chi-square and normal distributions expressed through
the regularized incomplete beta and gamma functions.
"""

import math

import numpy as np
import numpy.typing as npt
from scipy import special as sp

from factorsel.errors import DomainError


def _check_finite(name: str, *values: float) -> None:
    for value in values:
        if math.isnan(value):
            raise DomainError(f"{name}: argument is NaN")


def log_gamma(x: float) -> float:
    """Return ln Γ(x) for x > 0.

    Raises:
        DomainError: x <= 0 or NaN

    """
    _check_finite("log_gamma", x)
    if x <= 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(sp.gammaln(x))


def digamma(x: float) -> float:
    """Return ψ(x) = d/dx ln Γ(x) for x > 0.

    Raises:
        DomainError: x <= 0 or NaN

    """
    _check_finite("digamma", x)
    if x <= 0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    return float(sp.digamma(x))


def digamma_array(x: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Vectorized digamma for positive arrays.

    Raises:
        DomainError: any element <= 0

    """
    values = np.asarray(x, dtype=float)
    if values.size and not (values > 0).all():
        raise DomainError("digamma requires positive arguments")
    return np.asarray(sp.digamma(values), dtype=float)


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Return the regularized incomplete beta function I_x(a, b).

    Raises:
        DomainError: a <= 0, b <= 0, or x outside [0, 1]

    """
    _check_finite("reg_inc_beta", a, b, x)
    if a <= 0 or b <= 0:
        raise DomainError(f"reg_inc_beta requires a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"reg_inc_beta requires 0 <= x <= 1, got {x}")
    return float(sp.betainc(a, b, x))


def reg_inc_gamma(s: float, x: float) -> float:
    """Return the lower regularized incomplete gamma function P(s, x).

    Raises:
        DomainError: s <= 0 or x < 0

    """
    _check_finite("reg_inc_gamma", s, x)
    if s <= 0 or x < 0:
        raise DomainError(f"reg_inc_gamma requires s > 0, x >= 0, got s={s}, x={x}")
    return float(sp.gammainc(s, x))


def reg_inc_gamma_upper(s: float, x: float) -> float:
    """Return the upper regularized incomplete gamma function Q(s, x) = 1 - P(s, x).

    Computed directly rather than as 1 - P so that tiny tails keep their
    precision.

    Raises:
        DomainError: s <= 0 or x < 0

    """
    _check_finite("reg_inc_gamma_upper", s, x)
    if s <= 0 or x < 0:
        raise DomainError(
            f"reg_inc_gamma_upper requires s > 0, x >= 0, got s={s}, x={x}"
        )
    return float(sp.gammaincc(s, x))


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Return P(F > f) for the F(dfn, dfd) distribution."""
    if math.isinf(f):
        return 0.0
    if f <= 0:
        return 1.0
    return reg_inc_beta(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f))


def chi2_sf(statistic: float, dof: float) -> float:
    """Return P(X > statistic) for the chi-square distribution with dof degrees."""
    if math.isinf(statistic):
        return 0.0
    if statistic <= 0:
        return 1.0
    return reg_inc_gamma_upper(dof / 2.0, statistic / 2.0)


def normal_two_sided_p(z: float) -> float:
    """Return P(|Z| > |z|) for a standard normal Z."""
    if math.isinf(z):
        return 0.0
    return reg_inc_gamma_upper(0.5, z * z / 2.0)
