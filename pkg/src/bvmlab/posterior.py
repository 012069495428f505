"""Exact conjugate Gaussian posterior for the linear white-noise model, with
an independently coded Tikhonov minimiser as cross-check, marginal laws of
linear functionals, credible intervals, posterior sampling, and dual-norm
credible-ball radii.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
import scipy.stats

from .errors import ConfigurationError, NumericalError, ShapeError
from .operators import ForwardOperator, apply
from .priors import GaussianPrior
from .spectral import CoeffVector, SpectralBasis, coeff_vector

__all__ = [
    "Observation",
    "PosteriorGaussian",
    "FunctionalLaw",
    "CredibleInterval",
    "noise_draw",
    "observe",
    "observation_from_data",
    "posterior_update",
    "tikhonov_solve",
    "functional_marginal",
    "credible_interval",
    "posterior_sample",
    "credible_ball_radius",
]

# dense posterior covariances may carry eigenvalue defects up to this
# fraction of the trace before we refuse to repair them
PSD_DEFECT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Observation:
    """Noisy measurement M = A f + eps * w, optionally remembering the simulated truth."""

    data: CoeffVector
    epsilon: float
    truth: Optional[CoeffVector] = None
    noise_seed: Optional[int] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError("noise level epsilon must be positive")


def noise_draw(basis: SpectralBasis, seed: int) -> CoeffVector:
    """White-noise realisation: iid standard normal coefficients."""
    rng = np.random.default_rng(seed)
    return coeff_vector(basis, rng.standard_normal(basis.n_modes))


def observe(
    op: ForwardOperator, f_dagger: CoeffVector, epsilon: float, seed: int
) -> Observation:
    """Simulate one measurement from the fixed truth with a seeded noise draw."""
    w = noise_draw(op.basis, seed)
    data = coeff_vector(op.basis, apply(op, f_dagger).coeffs + epsilon * w.coeffs)
    return Observation(data=data, epsilon=epsilon, truth=f_dagger, noise_seed=seed)


def observation_from_data(data: CoeffVector, epsilon: float) -> Observation:
    return Observation(data=data, epsilon=epsilon)


@dataclass(frozen=True, eq=False)
class PosteriorGaussian:
    """Conditional law of f given the data: mean plus diagonal or dense covariance."""

    mean: CoeffVector
    epsilon: float
    prior: GaussianPrior
    operator: ForwardOperator
    variances: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.variances is None) == (self.covariance is None):
            raise ConfigurationError("exactly one covariance representation must be given")
        for name in ("variances", "covariance"):
            array = getattr(self, name)
            if array is not None and array.flags.writeable:
                frozen = array.copy()
                frozen.flags.writeable = False
                object.__setattr__(self, name, frozen)

    @property
    def is_diagonal(self) -> bool:
        return self.variances is not None

    @cached_property
    def _sample_factor(self) -> np.ndarray:
        # symmetric square root of the dense covariance, eigenvalue-floored at zero
        vals, vecs = np.linalg.eigh(self.covariance)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _check_compatible(prior: GaussianPrior, op: ForwardOperator, obs: Observation) -> None:
    if not (prior.basis.compatible(op.basis) and op.basis.compatible(obs.data.basis)):
        raise ShapeError("prior, operator, and observation must share one basis")


def posterior_update(
    prior: GaussianPrior, op: ForwardOperator, obs: Observation
) -> PosteriorGaussian:
    """Closed-form conjugate update.

    Diagonal path: per-mode formulas.  Dense path: data-space form
    mean = S A^T (A S A^T + eps^2 I)^{-1} M with S the prior covariance,
    symmetrised and eigenvalue-floored within the PSD defect tolerance.
    """
    _check_compatible(prior, op, obs)
    eps2 = obs.epsilon**2
    tau = prior.variances
    if op.is_diagonal:
        a = op.multipliers
        denom = a**2 * tau + eps2
        mean = tau * a * obs.data.coeffs / denom
        var = eps2 * tau / denom
        return PosteriorGaussian(
            mean=coeff_vector(prior.basis, mean),
            epsilon=obs.epsilon,
            prior=prior,
            operator=op,
            variances=var,
        )
    amat = op.matrix
    data_cov = (amat * tau[None, :]) @ amat.T + eps2 * np.eye(prior.basis.n_modes)
    try:
        factor = scipy.linalg.cho_factor(data_cov)
    except scipy.linalg.LinAlgError as exc:
        cond = np.linalg.cond(data_cov)
        raise NumericalError(
            f"data-space solve failed (condition number {cond:.3g}): {exc}"
        ) from exc
    cross = tau[:, None] * amat.T  # S A^T
    mean = cross @ scipy.linalg.cho_solve(factor, obs.data.coeffs)
    cov = np.diag(tau) - cross @ scipy.linalg.cho_solve(factor, cross.T)
    cov = 0.5 * (cov + cov.T)
    eigvals = np.linalg.eigvalsh(cov)
    trace = float(np.trace(cov))
    if eigvals[0] < -PSD_DEFECT_TOLERANCE * max(trace, np.finfo(float).tiny):
        raise NumericalError(
            f"posterior covariance defect {eigvals[0]:.3g} exceeds tolerance"
        )
    if eigvals[0] < 0.0:
        vals, vecs = np.linalg.eigh(cov)
        cov = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return PosteriorGaussian(
        mean=coeff_vector(prior.basis, mean),
        epsilon=obs.epsilon,
        prior=prior,
        operator=op,
        covariance=cov,
    )


def tikhonov_solve(
    prior: GaussianPrior, op: ForwardOperator, obs: Observation
) -> CoeffVector:
    """Minimise the penalised data-misfit functional by parameter-space normal equations.

    Deliberately a different factorization than ``posterior_update`` - solving
    (A^T A / eps^2 + S^{-1}) f = A^T M / eps^2 densely even for diagonal
    operators - so agreement with the posterior mean is a genuine cross-check.
    """
    _check_compatible(prior, op, obs)
    eps2 = obs.epsilon**2
    n = prior.basis.n_modes
    if op.is_diagonal:
        amat = np.diag(op.multipliers)
    else:
        amat = op.matrix
    hess = amat.T @ amat / eps2 + np.diag(1.0 / prior.variances)
    rhs = amat.T @ obs.data.coeffs / eps2
    try:
        factor = scipy.linalg.cho_factor(hess)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"normal-equation solve failed: {exc}") from exc
    return coeff_vector(prior.basis, scipy.linalg.cho_solve(factor, rhs))


class FunctionalLaw(NamedTuple):
    mean: float
    variance: float


class CredibleInterval(NamedTuple):
    center: float
    radius: float


def functional_marginal(post: PosteriorGaussian, psi: CoeffVector) -> FunctionalLaw:
    """Exact Gaussian marginal of the linear functional <f, psi> under the posterior."""
    if not post.mean.basis.compatible(psi.basis):
        raise ShapeError("functional lives on a different basis than the posterior")
    mean = float(np.dot(post.mean.coeffs, psi.coeffs))
    if post.is_diagonal:
        var = float(np.dot(post.variances, psi.coeffs**2))
    else:
        var = float(psi.coeffs @ post.covariance @ psi.coeffs)
    return FunctionalLaw(mean=mean, variance=max(var, 0.0))


def two_sided_quantile(level: float) -> float:
    """q with P(|Z| <= q) = level for standard normal Z."""
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must lie strictly between 0 and 1")
    return float(scipy.stats.norm.ppf(0.5 + level / 2.0))


def credible_interval(
    post: PosteriorGaussian, psi: CoeffVector, level: float
) -> CredibleInterval:
    """Exact central credible interval for <f, psi>: the marginal is Gaussian at finite noise."""
    law = functional_marginal(post, psi)
    q = two_sided_quantile(level)
    return CredibleInterval(center=law.mean, radius=q * np.sqrt(law.variance))


def posterior_sample(post: PosteriorGaussian, seed: int) -> CoeffVector:
    """Exact Gaussian draw from the posterior; deterministic per seed."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(post.mean.basis.n_modes)
    if post.is_diagonal:
        draw = post.mean.coeffs + np.sqrt(post.variances) * z
    else:
        draw = post.mean.coeffs + post._sample_factor @ z
    return coeff_vector(post.mean.basis, draw)


def credible_ball_radius(
    post: PosteriorGaussian,
    beta: float,
    level: float,
    n_draws: int,
    seed: int,
) -> float:
    """Empirical (level)-quantile of the dual-norm distance of posterior draws from the mean.

    Uses the 'higher' empirical quantile with the draw count fixed by the
    caller; deterministic per seed.
    """
    if n_draws < 1000:
        raise ConfigurationError("need at least 1000 posterior draws for a ball radius")
    if beta < 0:
        raise ConfigurationError("ball norms use beta >= 0")
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must lie strictly between 0 and 1")
    basis = post.mean.basis
    weights = (1.0 + basis.eigenvalues) ** (-beta)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, basis.n_modes))
    if post.is_diagonal:
        centred = z * np.sqrt(post.variances)[None, :]
    else:
        centred = z @ post._sample_factor.T
    norms = np.sqrt((centred**2) @ weights)
    return float(np.quantile(norms, level, method="higher"))
