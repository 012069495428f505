"""Monte Carlo harness for the asymptotic-normality experiments: representer
construction, limiting variances, replicate engine, distributional distances,
coverage reports, rate regression, and the tightness series of the limit law.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.stats

from .errors import ConfigurationError, NumericalError, ShapeError
from .operators import (
    ForwardOperator,
    OperatorLabel,
    apply,
    fisher_solve,
    normal_apply,
)
from .posterior import (
    Observation,
    credible_ball_radius,
    functional_marginal,
    noise_draw,
    posterior_update,
    two_sided_quantile,
)
from .priors import GaussianPrior, _wilson_interval
from .seeds import derive_seed
from .spectral import CoeffVector, coeff_vector, dual_norm, inner

__all__ = [
    "Construction",
    "TestFunctional",
    "ReplicateResult",
    "CoverageKind",
    "CoverageReport",
    "RateFit",
    "TightnessVerdict",
    "TightnessResult",
    "representer",
    "heat_psi_from_representer",
    "run_replicates",
    "ks_distance",
    "bl_distance_upper",
    "coverage_report",
    "rate_fit",
    "tightness_series",
    "svd_truncated_functional",
    "oracle_truncation_level",
]

# largest decay exponent the heat representer map evaluates before the
# semigroup weight is numerically void
HEAT_DECAY_CEILING = 300.0


class Construction(enum.Enum):
    FROM_PSI = "from_psi"
    FROM_REPRESENTER = "from_representer"


@dataclass(frozen=True)
class TestFunctional:
    """A test functional psi together with its representer and limiting variance.

    The representer solves psi = -A*A psi_tilde; the limiting variance is the
    squared data-space norm of A psi_tilde.
    """

    psi: CoeffVector
    psi_tilde: CoeffVector
    limiting_variance: float
    construction: Construction


def _roundtrip_check(op: ForwardOperator, psi: CoeffVector, psi_tilde: CoeffVector) -> None:
    reproduced = normal_apply(op, psi_tilde)
    gap = np.linalg.norm(-reproduced.coeffs - psi.coeffs)
    scale = np.linalg.norm(psi.coeffs)
    if gap > 1e-8 * max(scale, np.finfo(float).tiny):
        raise NumericalError(
            f"representer roundtrip residual {gap / scale:.3g} exceeds 1e-8"
        )


def representer(
    op: ForwardOperator, psi: CoeffVector, cond_limit: float = 1e12
) -> TestFunctional:
    """Solve psi = -A*A psi_tilde and record the limiting variance ||A psi_tilde||^2.

    For the elliptic solution map the closed form psi_tilde = -L(L psi) is
    evaluated as well and must agree with the solver path to relative 1e-8.
    """
    tilde = coeff_vector(op.basis, -fisher_solve(op, psi, cond_limit).coeffs)
    if op.label is OperatorLabel.ELLIPTIC_BVP and op.companion is not None:
        diff_op = op.companion
        alt = coeff_vector(op.basis, -apply(diff_op, apply(diff_op, psi)).coeffs)
        gap = np.linalg.norm(alt.coeffs - tilde.coeffs)
        scale = max(np.linalg.norm(tilde.coeffs), np.finfo(float).tiny)
        if gap > 1e-8 * scale:
            raise NumericalError(
                f"solver and closed-form representers disagree by {gap / scale:.3g}"
            )
    _roundtrip_check(op, psi, tilde)
    image = apply(op, tilde)
    return TestFunctional(
        psi=psi,
        psi_tilde=tilde,
        limiting_variance=inner(image, image),
        construction=Construction.FROM_PSI,
    )


def heat_psi_from_representer(psi_tilde: CoeffVector, time_horizon: float) -> TestFunctional:
    """Admissible heat-equation functional psi_j = -exp(-2 lambda_j T) psi_tilde_j.

    The representer must be band-limited to modes with 2 lambda_j T <= 300 so
    every semigroup weight stays representable in double precision.
    """
    if time_horizon < 0:
        raise ConfigurationError("the observation time must be nonnegative")
    decay = 2.0 * psi_tilde.basis.eigenvalues * time_horizon
    occupied = psi_tilde.coeffs != 0.0
    if np.any(decay[occupied] > HEAT_DECAY_CEILING):
        raise ConfigurationError(
            "representer occupies modes beyond the double-precision band limit "
            f"(2 lambda T <= {HEAT_DECAY_CEILING:g})"
        )
    weights = np.exp(-decay)
    psi = coeff_vector(psi_tilde.basis, -weights * psi_tilde.coeffs)
    return TestFunctional(
        psi=psi,
        psi_tilde=psi_tilde,
        limiting_variance=float(np.sum(weights * psi_tilde.coeffs**2)),
        construction=Construction.FROM_REPRESENTER,
    )


@dataclass(frozen=True)
class ReplicateResult:
    """Per-replicate record of the functional estimate and its credible sets."""

    replicate_index: int
    functional_index: int
    epsilon: float
    functional_mean: float
    scaled_error: float
    hat_psi: float
    interval_radius: float
    interval_covered: bool
    posterior_functional_variance: float
    limiting_variance: float
    level: float
    ball_radius: Optional[float] = None
    ball_covered: Optional[bool] = None


def run_replicates(
    prior: GaussianPrior,
    op: ForwardOperator,
    f_dagger: CoeffVector,
    functionals: Sequence[TestFunctional],
    epsilon: float,
    n_replicates: int,
    level: float = 0.95,
    ball_beta: Optional[float] = None,
    master_seed: int = 0,
    ball_draws: int = 1000,
    replicate_indices: Optional[Sequence[int]] = None,
) -> list[ReplicateResult]:
    """Independent measurement replicates from the fixed truth, fully deterministic.

    Replicate i draws its noise from a seed derived from (master_seed, i), so
    the result list is bitwise identical for any scheduling or index split;
    ``replicate_indices`` lets a parallel driver run a sub-range.
    """
    if n_replicates < 1:
        raise ConfigurationError("need at least one replicate")
    if not op.basis.compatible(f_dagger.basis):
        raise ShapeError("truth lives on a different basis than the operator")
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    indices = range(n_replicates) if replicate_indices is None else replicate_indices
    q = two_sided_quantile(level)
    truth_values = [inner(f_dagger, tf.psi) for tf in functionals]
    images = [apply(op, tf.psi_tilde) for tf in functionals]
    signal = apply(op, f_dagger)
    results: list[ReplicateResult] = []
    for i in indices:
        noise_seed = derive_seed(master_seed, 2 * i)
        noise = noise_draw(op.basis, noise_seed)
        data = coeff_vector(op.basis, signal.coeffs + epsilon * noise.coeffs)
        obs = Observation(data=data, epsilon=epsilon, truth=f_dagger, noise_seed=noise_seed)
        post = posterior_update(prior, op, obs)
        ball_radius = None
        ball_covered = None
        if ball_beta is not None:
            ball_radius = credible_ball_radius(
                post, ball_beta, level, ball_draws, derive_seed(master_seed, 2 * i + 1)
            )
            distance = dual_norm(
                coeff_vector(op.basis, f_dagger.coeffs - post.mean.coeffs), ball_beta
            )
            ball_covered = bool(distance <= ball_radius)
        for k, tf in enumerate(functionals):
            law = functional_marginal(post, tf.psi)
            radius = q * math.sqrt(law.variance)
            covered = bool(abs(truth_values[k] - law.mean) <= radius)
            results.append(
                ReplicateResult(
                    replicate_index=i,
                    functional_index=k,
                    epsilon=epsilon,
                    functional_mean=law.mean,
                    scaled_error=(law.mean - truth_values[k]) / epsilon,
                    hat_psi=truth_values[k] - epsilon * inner(images[k], noise),
                    interval_radius=radius,
                    interval_covered=covered,
                    posterior_functional_variance=law.variance,
                    limiting_variance=tf.limiting_variance,
                    level=level,
                    ball_radius=ball_radius,
                    ball_covered=ball_covered,
                )
            )
    return results


def ks_distance(samples: Sequence[float], variance: float) -> float:
    """One-sample Kolmogorov-Smirnov statistic against N(0, variance)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ConfigurationError("need at least two samples")
    if variance <= 0:
        raise ConfigurationError("variance must be positive")
    return float(
        scipy.stats.kstest(x, scipy.stats.norm(scale=math.sqrt(variance)).cdf).statistic
    )


def bl_distance_upper(
    samples: Sequence[float], variance: float, clip: float = 8.0
) -> float:
    """Upper bound on the bounded-Lipschitz distance to N(0, variance).

    Couples order statistics with Gaussian quantiles (a W1 coupling cost with
    tails clipped at +-clip*sigma) and caps at the trivial diameter 2.  An
    upper bound only, never the exact metric value.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ConfigurationError("need at least two samples")
    if variance <= 0:
        raise ConfigurationError("variance must be positive")
    if clip <= 0:
        raise ConfigurationError("clip must be positive")
    sigma = math.sqrt(variance)
    bound = clip * sigma
    n = x.size
    quantiles = scipy.stats.norm.ppf((np.arange(n) + 0.5) / n) * sigma
    lhs = np.clip(np.sort(x), -bound, bound)
    rhs = np.clip(quantiles, -bound, bound)
    return float(min(2.0, np.mean(np.abs(lhs - rhs))))


class CoverageKind(enum.Enum):
    INTERVAL = "interval"
    BALL = "ball"


@dataclass(frozen=True)
class CoverageReport:
    """Aggregated Monte Carlo coverage evidence for one credible-set family."""

    n_replicates: int
    hit_rate: float
    wilson_low: float
    wilson_high: float
    mean_scaled_radius: float
    ks_to_limit: float
    target_level: float


def coverage_report(
    results: Sequence[ReplicateResult], which: CoverageKind = CoverageKind.INTERVAL
) -> CoverageReport:
    """Hit rate with Wilson bounds, scaled mean radius, and KS distance to the limit law."""
    if len(results) == 0:
        raise ConfigurationError("cannot report coverage of an empty result list")
    if which is CoverageKind.BALL:
        if any(r.ball_radius is None or r.ball_covered is None for r in results):
            raise ConfigurationError("ball coverage requested but ball fields are missing")
        hits = sum(r.ball_covered for r in results)
        radii = np.array([r.ball_radius / r.epsilon for r in results])
    else:
        hits = sum(r.interval_covered for r in results)
        radii = np.array([r.interval_radius / r.epsilon for r in results])
    n = len(results)
    low, high = _wilson_interval(hits, n)
    scaled = [r.scaled_error for r in results]
    return CoverageReport(
        n_replicates=n,
        hit_rate=hits / n,
        wilson_low=low,
        wilson_high=high,
        mean_scaled_radius=float(np.mean(radii)),
        ks_to_limit=ks_distance(scaled, results[0].limiting_variance),
        target_level=results[0].level,
    )


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log error against log noise level."""

    epsilons: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float
    predicted_exponent: float


def rate_fit(
    epsilons: Sequence[float], errors: Sequence[float], predicted_exponent: float
) -> RateFit:
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.size != err.size or eps.size < 3:
        raise ConfigurationError("need at least three ladder points of equal count")
    if np.any(eps <= 0) or np.any(err <= 0):
        raise ConfigurationError("ladder points and errors must be positive")
    x = np.log(eps)
    y = np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 and ss_res < 1e-28 else 1.0 - ss_res / max(ss_tot, np.finfo(float).tiny)
    return RateFit(
        epsilons=tuple(eps),
        errors=tuple(err),
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        predicted_exponent=float(predicted_exponent),
    )


class TightnessVerdict(enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class TightnessResult:
    partial_sums: np.ndarray
    verdict: TightnessVerdict


def tightness_series(
    op_l: ForwardOperator, beta: float, max_modes: int
) -> TightnessResult:
    """Partial sums of sum_j (1 + lambda_j)^(-beta) ||L phi_j||^2 and a verdict.

    The series is the expected squared dual norm of the limit process; the
    verdict applies a Cauchy criterion to the tail: relative increment below
    1e-3 converges, a non-shrinking or large increment diverges, the
    logarithmic middle ground is the boundary regime.
    """
    if max_modes < 100:
        raise ConfigurationError("need at least 100 modes to judge the tail")
    if op_l.basis.n_modes < max_modes:
        raise ConfigurationError(
            f"operator basis has {op_l.basis.n_modes} modes; build it with at least {max_modes}"
        )
    weights = (1.0 + op_l.basis.eigenvalues[:max_modes]) ** (-beta)
    if op_l.is_diagonal:
        mode_norms = op_l.multipliers[:max_modes] ** 2
    else:
        mode_norms = np.sum(op_l.matrix[:, :max_modes] ** 2, axis=0)
    partial = np.cumsum(weights * mode_norms)
    s_full = partial[max_modes - 1]
    s_half = partial[max_modes // 2 - 1]
    s_quarter = partial[max_modes // 4 - 1]
    r_hi = (s_full - s_half) / s_half
    r_lo = (s_half - s_quarter) / s_quarter
    if r_hi < 1e-3:
        verdict = TightnessVerdict.CONVERGES
    elif r_hi >= 0.25 or r_hi >= 0.95 * r_lo:
        verdict = TightnessVerdict.DIVERGES
    else:
        verdict = TightnessVerdict.BOUNDARY
    return TightnessResult(partial_sums=partial, verdict=verdict)


def svd_truncated_functional(
    op: ForwardOperator, data: CoeffVector, psi: CoeffVector, level: int
) -> float:
    """Spectral-cutoff least squares: invert the ``level`` best-observed modes only.

    The plug-in competitor for the efficiency-floor experiment; diagonal
    operators only (their singular system is the mode system).
    """
    if not op.is_diagonal:
        raise ConfigurationError("the spectral-cutoff competitor needs a diagonal operator")
    if not 0 <= level <= op.basis.n_modes:
        raise ConfigurationError("truncation level out of range")
    order = np.argsort(-np.abs(op.multipliers), kind="stable")
    kept = order[:level]
    estimate = np.zeros(op.basis.n_modes)
    estimate[kept] = data.coeffs[kept] / op.multipliers[kept]
    return float(np.dot(psi.coeffs, estimate))


def oracle_truncation_level(
    op: ForwardOperator, psi: CoeffVector, f_dagger: CoeffVector, epsilon: float
) -> int:
    """Truncation level minimising the exact mean squared error of the functional estimate.

    Uses the true signal (an oracle choice): squared bias of the discarded
    modes plus noise variance of the inverted ones.
    """
    if not op.is_diagonal:
        raise ConfigurationError("the spectral-cutoff competitor needs a diagonal operator")
    order = np.argsort(-np.abs(op.multipliers), kind="stable")
    psi_o = psi.coeffs[order]
    f_o = f_dagger.coeffs[order]
    a_o = op.multipliers[order]
    with np.errstate(divide="ignore"):
        var_terms = np.where(a_o != 0.0, psi_o**2 / a_o**2, np.inf)
    var_cum = np.concatenate([[0.0], np.cumsum(var_terms)])
    bias_tail = np.concatenate([np.cumsum((psi_o * f_o)[::-1])[::-1], [0.0]])
    mse = bias_tail**2 + epsilon**2 * var_cum
    return int(np.argmin(mse))
