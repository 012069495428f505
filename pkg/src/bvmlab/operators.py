"""Forward maps: smoothing multiplier on the torus, elliptic solution
operator on the interval, heat semigroup, with adjoints and inversion of the
normal operator A*A.

Operators are immutable; dense factorizations are computed once and cached.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, IllPosedError, NumericalError, ShapeError
from .spectral import BasisKind, CoeffVector, SpectralBasis, coeff_vector

__all__ = [
    "OperatorLabel",
    "ForwardOperator",
    "EllipticCoefficient",
    "identity_operator",
    "psido_multiplier",
    "elliptic_operator",
    "heat_semigroup",
    "as_dense",
    "apply",
    "adjoint_apply",
    "normal_apply",
    "fisher_solve",
    "embedding_constant",
]

# multipliers below this are stored as exact zeros and the mode flagged
UNDERFLOW_FLOOR = 1e-300

DEFAULT_COND_LIMIT = 1e12


class OperatorLabel(enum.Enum):
    PSIDO = "psido"
    ELLIPTIC_BVP = "elliptic_bvp"
    HEAT = "heat"
    IDENTITY = "identity"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """Linear forward map in the spectral basis: diagonal multipliers or a dense matrix.

    ``companion`` links the elliptic differential operator and its solution
    map to each other; ``smoothing_order`` is +inf for the heat semigroup.
    """

    basis: SpectralBasis
    label: OperatorLabel
    smoothing_order: float
    multipliers: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    companion: Optional["ForwardOperator"] = None

    def __post_init__(self):
        if (self.multipliers is None) == (self.matrix is None):
            raise ConfigurationError("exactly one of multipliers/matrix must be given")
        if self.multipliers is not None:
            m = np.array(self.multipliers, dtype=float, copy=True)
            if m.shape != (self.basis.n_modes,):
                raise ShapeError("multiplier count does not match the basis")
            if not np.all(np.isfinite(m)):
                raise ConfigurationError("multipliers must be finite")
            if np.any(m == 0.0) and self.label is not OperatorLabel.HEAT:
                raise ConfigurationError("zero multipliers are only tolerated for the heat semigroup")
            m.flags.writeable = False
            object.__setattr__(self, "multipliers", m)
        else:
            a = np.array(self.matrix, dtype=float, copy=True)
            n = self.basis.n_modes
            if a.shape != (n, n):
                raise ShapeError("matrix must be square over the basis modes")
            a.flags.writeable = False
            object.__setattr__(self, "matrix", a)

    @property
    def is_diagonal(self) -> bool:
        return self.multipliers is not None

    @property
    def unidentifiable_modes(self) -> np.ndarray:
        """Modes whose multiplier underflowed to zero (severely ill-posed range)."""
        if self.is_diagonal:
            return self.multipliers == 0.0
        return np.zeros(self.basis.n_modes, dtype=bool)

    @cached_property
    def min_singular_value(self) -> float:
        if self.is_diagonal:
            return float(np.min(np.abs(self.multipliers)))
        return float(np.linalg.svd(self.matrix, compute_uv=False)[-1])

    @cached_property
    def _gram(self) -> np.ndarray:
        # normal operator A^T A for the dense representation
        return self.matrix.T @ self.matrix

    @cached_property
    def _gram_cond(self) -> float:
        return float(np.linalg.cond(self._gram))

    @cached_property
    def _gram_factor(self):
        try:
            return scipy.linalg.cho_factor(self._gram)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"normal operator factorization failed: {exc}") from exc


@dataclass(frozen=True)
class EllipticCoefficient:
    """Scalar diffusion coefficient a(x) on [0,1] with a uniform ellipticity floor."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    floor: float = 1e-6

    def __post_init__(self):
        if self.floor <= 0:
            raise ConfigurationError("ellipticity floor must be positive")

    def samples(self, grid: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.evaluator(grid), dtype=float) * np.ones_like(grid)
        if vals.min() < self.floor:
            raise ConfigurationError(
                f"coefficient dips to {vals.min():.3g}, below the ellipticity floor {self.floor:.3g}"
            )
        return vals


def identity_operator(basis: SpectralBasis) -> ForwardOperator:
    return ForwardOperator(
        basis=basis,
        label=OperatorLabel.IDENTITY,
        smoothing_order=0.0,
        multipliers=np.ones(basis.n_modes),
    )


def psido_multiplier(basis: SpectralBasis, t: float) -> ForwardOperator:
    """Order-t smoothing multiplier (1 + k^2)^(-t/2) on the torus; t = 0 is the identity."""
    if basis.kind is not BasisKind.FOURIER_TORUS:
        raise ConfigurationError("the smoothing multiplier is defined on the torus basis")
    mult = (1.0 + basis.eigenvalues) ** (-t / 2.0)
    return ForwardOperator(
        basis=basis,
        label=OperatorLabel.PSIDO,
        smoothing_order=float(t),
        multipliers=mult,
    )


def elliptic_operator(
    coeff: EllipticCoefficient, basis: SpectralBasis
) -> tuple[ForwardOperator, ForwardOperator]:
    """Assemble the divergence-form operator L and its solution map L^-1.

    Galerkin entries integrate a(x) phi_i'(x) phi_j'(x) with the analytic mode
    derivatives on the oversampled grid; a constant coefficient collapses both
    operators to exact diagonals.  Returns ``(L, L_inv)`` linked as companions.
    """
    if basis.kind is not BasisKind.DIRICHLET_SINE:
        raise ConfigurationError("the elliptic solution operator is defined on the Dirichlet basis")
    avals = coeff.samples(basis.grid)
    if np.ptp(avals) == 0.0:
        lam = avals[0] * basis.eigenvalues
        fwd = ForwardOperator(
            basis=basis, label=OperatorLabel.ELLIPTIC_BVP, smoothing_order=-2.0,
            multipliers=lam,
        )
        inv = ForwardOperator(
            basis=basis, label=OperatorLabel.ELLIPTIC_BVP, smoothing_order=2.0,
            multipliers=1.0 / lam, companion=fwd,
        )
        object.__setattr__(fwd, "companion", inv)
        return fwd, inv
    deriv = basis.mode_derivatives(basis.grid)
    weighted = deriv * np.sqrt(basis.quad_weights * avals)
    mat = weighted @ weighted.T
    mat = 0.5 * (mat + mat.T)
    try:
        factor = scipy.linalg.cho_factor(mat)
        inv_mat = scipy.linalg.cho_solve(factor, np.eye(basis.n_modes))
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"Galerkin matrix is numerically singular: {exc}") from exc
    inv_mat = 0.5 * (inv_mat + inv_mat.T)
    fwd = ForwardOperator(
        basis=basis, label=OperatorLabel.ELLIPTIC_BVP, smoothing_order=-2.0, matrix=mat,
    )
    inv = ForwardOperator(
        basis=basis, label=OperatorLabel.ELLIPTIC_BVP, smoothing_order=2.0,
        matrix=inv_mat, companion=fwd,
    )
    object.__setattr__(fwd, "companion", inv)
    return fwd, inv


def heat_semigroup(basis: SpectralBasis, time_horizon: float) -> ForwardOperator:
    """Diagonal semigroup exp(-lambda_j T); underflowed modes are stored as exact zeros."""
    if basis.kind is not BasisKind.DIRICHLET_SINE:
        raise ConfigurationError("the heat semigroup is defined on the Dirichlet basis")
    if time_horizon < 0:
        raise ConfigurationError("the observation time must be nonnegative")
    with np.errstate(under="ignore"):
        mult = np.exp(-basis.eigenvalues * time_horizon)
    mult[mult < UNDERFLOW_FLOOR] = 0.0
    return ForwardOperator(
        basis=basis,
        label=OperatorLabel.HEAT,
        smoothing_order=math.inf if time_horizon > 0 else 0.0,
        multipliers=mult,
    )


def as_dense(op: ForwardOperator) -> ForwardOperator:
    """Rewrap a diagonal operator in the dense representation (testing aid)."""
    if not op.is_diagonal:
        return op
    return ForwardOperator(
        basis=op.basis,
        label=op.label,
        smoothing_order=op.smoothing_order,
        matrix=np.diag(op.multipliers),
    )


def _check_basis(op: ForwardOperator, f: CoeffVector) -> None:
    if not op.basis.compatible(f.basis):
        raise ShapeError("operator and coefficient vector live on different bases")


def apply(op: ForwardOperator, f: CoeffVector) -> CoeffVector:
    """Forward action A f."""
    _check_basis(op, f)
    if op.is_diagonal:
        return coeff_vector(op.basis, op.multipliers * f.coeffs)
    return coeff_vector(op.basis, op.matrix @ f.coeffs)


def adjoint_apply(op: ForwardOperator, g: CoeffVector) -> CoeffVector:
    """Adjoint action A* g (transpose action for the dense representation)."""
    _check_basis(op, g)
    if op.is_diagonal:
        return coeff_vector(op.basis, op.multipliers * g.coeffs)
    return coeff_vector(op.basis, op.matrix.T @ g.coeffs)


def normal_apply(op: ForwardOperator, f: CoeffVector) -> CoeffVector:
    """Action of the normal operator A*A."""
    return adjoint_apply(op, apply(op, f))


def fisher_solve(
    op: ForwardOperator, psi: CoeffVector, cond_limit: float = DEFAULT_COND_LIMIT
) -> CoeffVector:
    """Solve A*A x = psi, refusing when the normal operator is too ill-conditioned.

    For diagonal operators the effective condition number is measured over the
    modes psi actually occupies, relative to the best-observed mode; exceeding
    ``cond_limit`` (or touching an underflowed mode) raises ``IllPosedError``.
    """
    _check_basis(op, psi)
    if cond_limit <= 0:
        raise ConfigurationError("cond_limit must be positive")
    if op.is_diagonal:
        squared = op.multipliers**2
        occupied = psi.coeffs != 0.0
        if not np.any(occupied):
            return coeff_vector(op.basis, np.zeros(op.basis.n_modes))
        s_best = float(squared.max())
        s_worst = float(squared[occupied].min())
        if s_worst == 0.0 or s_best / s_worst > cond_limit:
            raise IllPosedError(
                "requested modes are outside the numerically resolvable range of A*A "
                f"(effective condition {math.inf if s_worst == 0 else s_best / s_worst:.3g} "
                f"> limit {cond_limit:.3g})"
            )
        out = np.zeros(op.basis.n_modes)
        out[occupied] = psi.coeffs[occupied] / squared[occupied]
        return coeff_vector(op.basis, out)
    if op._gram_cond > cond_limit:
        raise IllPosedError(
            f"normal operator condition {op._gram_cond:.3g} exceeds limit {cond_limit:.3g}"
        )
    sol = scipy.linalg.cho_solve(op._gram_factor, psi.coeffs)
    return coeff_vector(op.basis, sol)


def embedding_constant(op: ForwardOperator, ambient_exponent: float) -> float:
    """Calibrated constant c with ||A f|| <= c * ||f|| in the smoothness-``ambient_exponent`` norm.

    Computed as the operator norm of A composed with the inverse weight map,
    exact for diagonal operators.
    """
    half_inverse_weights = (1.0 + op.basis.eigenvalues) ** (-ambient_exponent / 2.0)
    if op.is_diagonal:
        return float(np.max(np.abs(op.multipliers) * half_inverse_weights))
    return float(np.linalg.norm(op.matrix * half_inverse_weights[None, :], 2))
