"""Single-step gradient-descent ensembles on simulated fields and their
comparison against the closed-form moments.

Every ensemble member draws its own field realization by default, so the
recorded post-step values are i.i.d. and the 3-sigma Monte Carlo bands
around the closed forms are exact. A shared-field mode (one realization,
many starting points) is available for comparison; its samples are weakly
correlated through the common field.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import backend, theory
from ._kernels_py import member_bitgens
from .fieldsim import build_field, default_spectral_samples

__all__ = [
    "single_step",
    "sample_phi1",
    "MomentReport",
    "moment_sweep",
    "KSReport",
    "ecdf_experiment",
    "gd_vs_random_search",
    "write_moment_csv",
    "write_sample_csv",
]

DEFAULT_BOX = 1e6


def single_step(field, x0, eta):
    """One gradient step from x0 on the given field.

    Returns (phi0, phi1, step_len) with step_len = eta * ||gradient||.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    phi0, g = field.value_and_gradient(x0)
    x1 = np.asarray(x0, dtype=float).ravel() - eta * g
    phi1 = field.value(x1)
    return phi0, phi1, eta * float(np.linalg.norm(g))


def sample_phi1(N, M, eta, num_points, seed, box=DEFAULT_BOX, mode="fresh"):
    """Draw num_points post-step samples.

    mode='fresh' (default): independent field per member, via the active
    backend kernel. mode='shared': one field realization for the whole
    ensemble, starting points still drawn from per-member streams.

    Returns (phi0, phi1, grad_sq) arrays.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if num_points < 1:
        raise ValueError("num_points must be positive")
    if mode == "fresh":
        return backend.run_fresh_ensemble(N, M, eta, num_points, seed, box)
    if mode != "shared":
        raise ValueError("mode must be 'fresh' or 'shared'")
    field = build_field(N, M, seed)
    phi0 = np.empty(num_points)
    phi1 = np.empty(num_points)
    grad_sq = np.empty(num_points)
    for i in range(num_points):
        bg_x = member_bitgens(seed, i)[2]
        x0 = box * (2.0 * np.random.Generator(bg_x).random(N) - 1.0)
        v0, g = field.value_and_gradient(x0)
        phi0[i] = v0
        grad_sq[i] = g @ g
        phi1[i] = field.value(x0 - eta * g)
    return phi0, phi1, grad_sq


@dataclass(frozen=True)
class MomentReport:
    """Sample vs closed-form moments for one learning rate.

    se_mean and se_var are the Monte Carlo standard errors of the sample
    mean and sample variance (the latter from the sample fourth moment).
    """

    eta: float
    sample_mean: float
    sample_var: float
    theory_mean: float
    theory_var: float
    se_mean: float
    se_var: float

    @property
    def within_band(self):
        """True when both sample moments sit within 3 standard errors of
        the closed forms."""
        return bool(
            abs(self.sample_mean - self.theory_mean) <= 3.0 * self.se_mean
            and abs(self.sample_var - self.theory_var) <= 3.0 * self.se_var
        )


def moment_sweep(etas, N, M, num_points, seed, box=DEFAULT_BOX, mode="fresh"):
    """Sample moments of the post-step value across a learning-rate grid.

    Each eta gets an independent sub-seed derived from the master seed,
    so rows are statistically independent. Returns a list of
    MomentReport in the given eta order.
    """
    etas = [float(e) for e in etas]
    sub_seeds = np.random.SeedSequence(int(seed)).generate_state(len(etas), np.uint64)
    reports = []
    for eta, sub in zip(etas, sub_seeds):
        _, phi1, _ = sample_phi1(N, M, eta, num_points, int(sub), box=box, mode=mode)
        sample_mean = float(np.mean(phi1))
        sample_var = float(np.var(phi1, ddof=1))
        se_mean = float(np.std(phi1, ddof=1) / np.sqrt(num_points))
        # standard error of the sample variance from the fourth moment
        centered = phi1 - sample_mean
        m4 = float(np.mean(centered**4))
        se_var = float(np.sqrt(max(m4 - sample_var**2, 0.0) / num_points))
        reports.append(
            MomentReport(
                eta=eta,
                sample_mean=sample_mean,
                sample_var=sample_var,
                theory_mean=float(theory.expected_phi1(eta, N)),
                theory_var=float(theory.var_phi1(eta, N)),
                se_mean=se_mean,
                se_var=se_var,
            )
        )
    return reports


@dataclass(frozen=True)
class KSReport:
    """Kolmogorov-Smirnov distance between a post-step sample and the
    normal law with the exact closed-form mean and variance."""

    N: int
    eta: float
    num_points: int
    statistic: float
    ref_mean: float
    ref_std: float
    phi1: np.ndarray


def ecdf_experiment(N, eta, num_points, seed, M=None, box=DEFAULT_BOX):
    """Sample num_points post-step values and measure their KS distance
    to the exact-moment normal reference."""
    if num_points < 100:
        raise ValueError("num_points must be at least 100")
    if M is None:
        M = default_spectral_samples(N)
    _, phi1, _ = sample_phi1(N, M, eta, num_points, seed, box=box)
    ref_mean = float(theory.expected_phi1(eta, N))
    ref_std = float(np.sqrt(theory.var_phi1(eta, N)))
    stat = float(stats.kstest(phi1, "norm", args=(ref_mean, ref_std)).statistic)
    return KSReport(
        N=N,
        eta=eta,
        num_points=num_points,
        statistic=stat,
        ref_mean=ref_mean,
        ref_std=ref_std,
        phi1=phi1,
    )


def gd_vs_random_search(N):
    """One optimal gradient step versus blind redrawing.

    Pairs the expected post-step value at the optimal learning rate with
    the expected number of independent standard normal draws a random
    search would need to reach that value.
    """
    value = theory.expected_phi1_at_opt(N)
    log10_tries = theory.random_search_log10_tries(value)
    tries = 10.0**log10_tries if log10_tries < 300 else np.inf
    return {
        "N": int(N),
        "value": value,
        "expected_tries": tries,
        "log10_tries": log10_tries,
    }


def write_moment_csv(path, reports):
    """CSV with header eta,sample_mean,sample_var,theory_mean,theory_var,se_mean."""
    lines = ["eta,sample_mean,sample_var,theory_mean,theory_var,se_mean"]
    for r in reports:
        lines.append(
            f"{r.eta!r},{r.sample_mean!r},{r.sample_var!r},"
            f"{r.theory_mean!r},{r.theory_var!r},{r.se_mean!r}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sample_csv(path, phi1):
    """Single-column CSV of post-step samples, header phi1."""
    lines = ["phi1"] + [repr(float(v)) for v in np.asarray(phi1).ravel()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
