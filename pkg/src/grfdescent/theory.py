"""Closed-form statistics of a single gradient-descent step on a stationary
zero-mean, unit-variance Gaussian random field over R^N with squared
exponential covariance k(r) = exp(-r^2/2).

The update is x1 = x0 - eta * grad(x0). Field value and gradient at the
starting point are written phi0 and xi0; the squared gradient norm xi0_sq
is chi-squared with N degrees of freedom.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .errors import QuadratureWarning

__all__ = [
    "kernel",
    "joint_covariance",
    "ConditionalMoments",
    "conditional_moments",
    "expected_phi1",
    "var_phi1",
    "pdf_phi1",
    "optimal_eta",
    "expected_phi1_at_opt",
    "expected_phi1_asymptote",
    "expected_step_length",
    "random_search_expected_tries",
    "random_search_log10_tries",
    "AsymptoticParams",
    "asymptotic_params",
    "write_curve_csv",
]


def kernel(r):
    """Covariance between field values at distance r: exp(-r^2/2)."""
    r = np.asarray(r, dtype=float)
    return np.exp(-0.5 * r * r)


def joint_covariance(delta_x):
    """Covariance matrix of (value, gradient) at two points separated by
    the vector delta_x (second point minus first point).

    The joint vector is ordered (phi(x), grad phi(x), phi(y), grad phi(y))
    with y = x + delta_x, so the matrix has order 2N+2. Both diagonal
    blocks are the identity; the cross block is

        k(||d||) * [[1, -d^T], [d, I - d d^T]],   d = delta_x.

    Returns a symmetric positive semidefinite (2N+2) x (2N+2) array.
    """
    d = np.asarray(delta_x, dtype=float).ravel()
    if not np.all(np.isfinite(d)):
        raise ValueError("delta_x must be finite")
    n = d.size
    k = math.exp(-0.5 * float(d @ d))
    cross = np.empty((n + 1, n + 1))
    cross[0, 0] = 1.0
    cross[0, 1:] = -d
    cross[1:, 0] = d
    cross[1:, 1:] = np.eye(n) - np.outer(d, d)
    cross *= k
    sigma = np.empty((2 * n + 2, 2 * n + 2))
    sigma[: n + 1, : n + 1] = np.eye(n + 1)
    sigma[n + 1 :, n + 1 :] = np.eye(n + 1)
    sigma[: n + 1, n + 1 :] = cross
    sigma[n + 1 :, : n + 1] = cross.T
    return sigma


@dataclass(frozen=True)
class ConditionalMoments:
    """Mean and variance of the post-step value given the starting data."""

    mean: float
    variance: float


def conditional_moments(phi0, xi0_sq, eta):
    """Moments of phi1 conditional on starting value phi0 and squared
    gradient norm xi0_sq, for learning rate eta.

    m1 = exp(-eta^2 xi0_sq / 2) (phi0 - eta xi0_sq)
    v1 = 1 - exp(-eta^2 xi0_sq) (1 + eta^2 xi0_sq)
    """
    if xi0_sq < 0:
        raise ValueError("xi0_sq must be nonnegative")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    s = eta * eta * xi0_sq
    mean = math.exp(-0.5 * s) * (phi0 - eta * xi0_sq)
    variance = max(0.0, 1.0 - math.exp(-s) * (1.0 + s))
    return ConditionalMoments(mean=mean, variance=variance)


def _check_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ValueError("eta must be nonnegative")
    return eta


def expected_phi1(eta, N):
    """E[phi1] after one step of size eta in dimension N.

    Closed form: -N eta (eta^2 + 1)^(-N/2 - 1). Zero at eta = 0 and
    negative for every eta > 0.
    """
    eta = _check_eta(eta)
    # exp(a log1p(x)) instead of (1+x)**a: for eta^2 near 1e-8 the
    # rounding of 1+eta^2 alone costs ~N*1e-16 in the exponent
    return -N * eta * np.exp((-N / 2.0 - 1.0) * np.log1p(eta * eta))


def var_phi1(eta, N):
    """Var[phi1] after one step of size eta in dimension N.

    Closed form:
    1 + N eta^2 (1 + 2 eta^2)^(-N/2 - 2) (N + 1 - 2 eta^2)
      - N^2 eta^2 (eta^2 + 1)^(-N - 2).
    Equals 1 at eta = 0 and tends back to 1 as eta grows.
    """
    eta = _check_eta(eta)
    e2 = eta * eta
    # the two O(N^2 eta^2) terms cancel to O(1), so the powers need the
    # full-precision log1p route or large N corrupts the difference
    return (
        1.0
        + N * e2 * np.exp((-N / 2.0 - 2.0) * np.log1p(2.0 * e2)) * (N + 1.0 - 2.0 * e2)
        - N * N * e2 * np.exp((-N - 2.0) * np.log1p(e2))
    )


def _chi2_support(N, width=12.0):
    """Integration window covering the chi^2_N mass up to ~1e-30."""
    half = width * math.sqrt(2.0 * N)
    return max(0.0, N - half), N + half


def pdf_phi1(phi1, eta, N, tol=1e-6):
    """Probability density of phi1 at learning rate eta in dimension N.

    The starting value integrates out in closed form: conditional on
    s = xi0_sq the post-step value is Gaussian with mean
    -eta s exp(-eta^2 s / 2) and variance 1 - eta^2 s exp(-eta^2 s)
    (the conditional variance never drops below 1 - 1/e). Only the
    chi^2_N mixture over s is integrated numerically, by adaptive
    quadrature on a window holding all but ~1e-30 of the chi^2 mass.

    Accepts a scalar or an array of phi1 values. If the quadrature error
    estimate exceeds tol a QuadratureWarning reports the achieved value.
    """
    eta = float(eta)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    phi1_arr = np.atleast_1d(np.asarray(phi1, dtype=float))
    if eta == 0.0:
        out = stats.norm.pdf(phi1_arr)
        return out[0] if np.isscalar(phi1) or np.ndim(phi1) == 0 else out

    lo, hi = _chi2_support(N)
    chi2_logpdf = stats.chi2(N).logpdf
    e2 = eta * eta

    def integrand(s, v):
        m = -eta * s * math.exp(-0.5 * e2 * s)
        var = 1.0 - e2 * s * math.exp(-e2 * s)
        z = v - m
        return math.exp(
            chi2_logpdf(s) - 0.5 * z * z / var - 0.5 * math.log(2.0 * math.pi * var)
        )

    out = np.empty_like(phi1_arr)
    worst = 0.0
    for i, v in enumerate(phi1_arr):
        val, err = integrate.quad(integrand, lo, hi, args=(v,), limit=200)
        out[i] = val
        worst = max(worst, err)
    if worst > tol:
        warnings.warn(
            f"pdf_phi1 quadrature error estimate {worst:.3e} exceeds tol {tol:.1e}",
            QuadratureWarning,
            stacklevel=2,
        )
    return out[0] if np.isscalar(phi1) or np.ndim(phi1) == 0 else out


def optimal_eta(N):
    """Learning rate minimizing E[phi1]: (N+1)^(-1/2)."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    return (N + 1.0) ** -0.5


def expected_phi1_at_opt(N):
    """E[phi1] at the optimal learning rate.

    Exact form -N (N+1)^(-1/2) ((N+2)/(N+1))^(-N/2 - 1), evaluated with
    log1p so it stays accurate for very large N. Approaches -sqrt(N/e)
    from above as N grows.
    """
    if N < 1:
        raise ValueError("N must be a positive integer")
    # ((N+2)/(N+1))^(-N/2-1) = exp(-(N/2+1) log(1 + 1/(N+1)))
    return -N / math.sqrt(N + 1.0) * math.exp(-(N / 2.0 + 1.0) * math.log1p(1.0 / (N + 1.0)))


def expected_phi1_asymptote(N):
    """Large-N approximation -sqrt(N/e) of expected_phi1_at_opt."""
    return -math.sqrt(N / math.e)


def expected_step_length(N):
    """Mean step length at the optimal learning rate.

    eta_opt * E||xi0|| = (N+1)^(-1/2) sqrt(2) Gamma((N+1)/2) / Gamma(N/2),
    computed with log-gamma so it is stable for N up to 1e6 and beyond.
    Tends to 1 from below as N grows.
    """
    if N < 1:
        raise ValueError("N must be a positive integer")
    log_ratio = special.gammaln((N + 1.0) / 2.0) - special.gammaln(N / 2.0)
    return math.exp(0.5 * math.log(2.0) - 0.5 * math.log(N + 1.0) + log_ratio)


def random_search_expected_tries(value):
    """Expected number of independent standard normal draws needed to see
    one at or below the given value: 1 / Phi(value).

    For values below roughly -37 the CDF underflows double precision; the
    result is then +inf and a warning carries log10 of the tries count
    (see random_search_log10_tries for the always-finite path).
    """
    value = float(value)
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    p = special.ndtr(value)
    if p == 0.0:
        warnings.warn(
            "normal CDF underflows at value "
            f"{value:g}; expected tries ~ 10^{random_search_log10_tries(value):.4g}",
            RuntimeWarning,
            stacklevel=2,
        )
        return math.inf
    return 1.0 / p


def random_search_log10_tries(value):
    """log10 of the expected random-search tries, via the log-scale
    complementary error function path (finite for any finite value)."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    return -special.log_ndtr(value) / math.log(10.0)


@dataclass(frozen=True)
class AsymptoticParams:
    """Location and scale of the large-N normal limit at rescaled learning
    rate X = eta sqrt(N).

    mu is the first-order mean -sqrt(N) X exp(-X^2/2) and sigma2 the
    first-order variance 1 + X^2 exp(-X^2). These are the leading-order
    values; var_phi1 gives the exact finite-N variance.
    """

    X: float
    mu: float
    sigma2: float


def asymptotic_params(X, N):
    """Normal-limit parameters at rescaled learning rate X in dimension N."""
    X = float(X)
    if X < 0:
        raise ValueError("X must be nonnegative")
    mu = -math.sqrt(N) * X * math.exp(-0.5 * X * X)
    sigma2 = 1.0 + X * X * math.exp(-X * X)
    return AsymptoticParams(X=X, mu=mu, sigma2=sigma2)


def write_curve_csv(path, param, mean, variance):
    """Write a theory curve as CSV with header param,mean_theory,var_theory.

    Values are formatted with shortest round-trip representation, UTF-8,
    LF line endings.
    """
    param = np.asarray(param, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    variance = np.asarray(variance, dtype=float).ravel()
    if not (param.size == mean.size == variance.size):
        raise ValueError("param, mean and variance must have equal length")
    lines = ["param,mean_theory,var_theory"]
    for p, m, v in zip(param, mean, variance):
        lines.append(f"{float(p)!r},{float(m)!r},{float(v)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
