"""Spectral bases on the torus and the unit interval.

Provides orthonormal eigenbases of the (negative) Laplacian, coefficient
vectors, Sobolev-scale norms, quadrature synthesis/analysis, smooth bump
cutoffs, and band-limited approximation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

__all__ = [
    "BasisKind",
    "SpectralBasis",
    "CoeffVector",
    "SobolevScale",
    "BumpCutoff",
    "build_basis",
    "coeff_vector",
    "unit_vector",
    "zero_vector",
    "synthesize",
    "analyze",
    "inner",
    "quadrature",
    "sobolev_norm",
    "dual_norm",
    "make_bump",
    "bandlimit_approx",
    "sobolev_draw",
]


class BasisKind(enum.Enum):
    FOURIER_TORUS = "fourier_torus"
    DIRICHLET_SINE = "dirichlet_sine"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Orthonormal Laplacian eigenbasis with an oversampled quadrature grid.

    Dirichlet sine basis on (0,1): phi_j(x) = sqrt(2) sin(pi j x) with
    eigenvalue (pi j)^2, j = 1..n_modes.  Real Fourier basis on the torus
    [0, 2pi): constant mode plus cos(kx)/sqrt(pi), sin(kx)/sqrt(pi) pairs,
    listed with signed frequencies (0, +1, -1, +2, -2, ...), eigenvalue k^2.
    """

    kind: BasisKind
    n_modes: int
    oversample: int
    frequencies: np.ndarray  # signed mode indices
    eigenvalues: np.ndarray  # Laplacian eigenvalues, nondecreasing in |freq|
    grid: np.ndarray         # quadrature nodes
    quad_weights: np.ndarray
    domain: tuple[float, float]
    grid_matrix: np.ndarray = field(repr=False)  # [j, i] = phi_j(grid[i])

    def mode_values(self, points: np.ndarray) -> np.ndarray:
        """Matrix of basis functions evaluated at arbitrary points, shape (n_modes, len(points))."""
        x = np.asarray(points, dtype=float)
        if self.kind is BasisKind.DIRICHLET_SINE:
            j = np.arange(1, self.n_modes + 1)
            return math.sqrt(2.0) * np.sin(np.pi * np.outer(j, x))
        out = np.empty((self.n_modes, x.size))
        out[0] = 1.0 / math.sqrt(2.0 * math.pi)
        for row, k in enumerate(self.frequencies[1:], start=1):
            if k > 0:
                out[row] = np.cos(k * x) / math.sqrt(math.pi)
            else:
                out[row] = np.sin(-k * x) / math.sqrt(math.pi)
        return out

    def mode_derivatives(self, points: np.ndarray) -> np.ndarray:
        """First derivatives phi_j'(x); Dirichlet basis only (Galerkin assembly)."""
        if self.kind is not BasisKind.DIRICHLET_SINE:
            raise ConfigurationError("mode derivatives are provided for the Dirichlet sine basis only")
        x = np.asarray(points, dtype=float)
        j = np.arange(1, self.n_modes + 1)
        return math.sqrt(2.0) * np.pi * j[:, None] * np.cos(np.pi * np.outer(j, x))

    def compatible(self, other: "SpectralBasis") -> bool:
        return (
            self.kind is other.kind
            and self.n_modes == other.n_modes
            and self.grid.size == other.grid.size
        )


@dataclass(frozen=True, eq=False)
class CoeffVector:
    """A function represented by its coefficients in a fixed spectral basis."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size != self.basis.n_modes:
            raise ShapeError(
                f"expected {self.basis.n_modes} coefficients, got array of shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("coefficients must be finite")
        object.__setattr__(self, "coeffs", _readonly(c))


@dataclass(frozen=True)
class SobolevScale:
    """Weight sequence (1 + lambda_j)^s defining the smoothness-s norm."""

    exponent: float
    weights: np.ndarray

    @classmethod
    def for_basis(cls, basis: SpectralBasis, exponent: float) -> "SobolevScale":
        w = (1.0 + basis.eigenvalues) ** exponent
        return cls(exponent=float(exponent), weights=_readonly(w))


def build_basis(kind: BasisKind, n_modes: int, oversample: int = 8) -> SpectralBasis:
    """Construct a spectral basis with a grid of oversample * n_modes quadrature nodes.

    The torus uses the (spectrally exact) rectangle rule on [0, 2pi), the
    interval the composite midpoint rule on (0, 1); products of basis modes
    are then integrated exactly at oversample >= 4.
    """
    if n_modes < 1:
        raise ConfigurationError("n_modes must be a positive integer")
    if oversample < 4:
        raise ConfigurationError("oversample must be at least 4 for quadrature accuracy")
    n_grid = oversample * n_modes
    if kind is BasisKind.FOURIER_TORUS:
        if n_modes % 2 == 0:
            raise ConfigurationError("torus basis needs an odd mode count (0 plus +-k pairs)")
        half = (n_modes - 1) // 2
        freqs = np.zeros(n_modes, dtype=int)
        freqs[1::2] = np.arange(1, half + 1)
        freqs[2::2] = -np.arange(1, half + 1)
        eigs = freqs.astype(float) ** 2
        grid = 2.0 * math.pi * np.arange(n_grid) / n_grid
        weights = np.full(n_grid, 2.0 * math.pi / n_grid)
        domain = (0.0, 2.0 * math.pi)
    elif kind is BasisKind.DIRICHLET_SINE:
        freqs = np.arange(1, n_modes + 1)
        eigs = (np.pi * freqs.astype(float)) ** 2
        grid = (np.arange(n_grid) + 0.5) / n_grid
        weights = np.full(n_grid, 1.0 / n_grid)
        domain = (0.0, 1.0)
    else:
        raise ConfigurationError(f"unknown basis kind: {kind!r}")
    basis = SpectralBasis(
        kind=kind,
        n_modes=n_modes,
        oversample=oversample,
        frequencies=_readonly(freqs),
        eigenvalues=_readonly(eigs),
        grid=_readonly(grid),
        quad_weights=_readonly(weights),
        domain=domain,
        grid_matrix=np.empty(0),
    )
    object.__setattr__(basis, "grid_matrix", _readonly(basis.mode_values(grid)))
    return basis


def coeff_vector(basis: SpectralBasis, values) -> CoeffVector:
    return CoeffVector(basis=basis, coeffs=np.asarray(values, dtype=float))


def zero_vector(basis: SpectralBasis) -> CoeffVector:
    return coeff_vector(basis, np.zeros(basis.n_modes))


def unit_vector(basis: SpectralBasis, index: int) -> CoeffVector:
    """Coordinate vector e_index (0-based position in the mode list)."""
    if not 0 <= index < basis.n_modes:
        raise ConfigurationError(f"mode index {index} out of range")
    c = np.zeros(basis.n_modes)
    c[index] = 1.0
    return coeff_vector(basis, c)


def _check_same_basis(f: CoeffVector, g: CoeffVector) -> None:
    if not f.basis.compatible(g.basis):
        raise ShapeError("coefficient vectors live on different bases")


def synthesize(f: CoeffVector, points) -> np.ndarray:
    """Evaluate sum_j c_j phi_j(x) at each point of the basis domain."""
    x = np.asarray(points, dtype=float)
    lo, hi = f.basis.domain
    if x.size and (x.min() < lo or x.max() > hi):
        raise DomainError(f"evaluation points must lie in [{lo}, {hi}]")
    if x.size == f.basis.grid.size and np.array_equal(x, f.basis.grid):
        return f.coeffs @ f.basis.grid_matrix
    return f.coeffs @ f.basis.mode_values(x)


def analyze(values, basis: SpectralBasis) -> CoeffVector:
    """Project grid samples onto the basis by quadrature inner products."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size != basis.grid.size:
        raise ShapeError(
            f"expected {basis.grid.size} grid samples, got array of shape {v.shape}"
        )
    return coeff_vector(basis, basis.grid_matrix @ (basis.quad_weights * v))


def quadrature(basis: SpectralBasis, values) -> float:
    """Integrate grid samples over the base domain."""
    v = np.asarray(values, dtype=float)
    if v.shape != basis.grid.shape:
        raise ShapeError("grid samples do not match the quadrature grid")
    return float(np.dot(basis.quad_weights, v))


def inner(f: CoeffVector, g: CoeffVector) -> float:
    """L2 inner product, realised as the coefficient dot product."""
    _check_same_basis(f, g)
    return float(np.dot(f.coeffs, g.coeffs))


def sobolev_norm(f: CoeffVector, exponent: float) -> float:
    """Smoothness-weighted norm sqrt(sum_j (1 + lambda_j)^s c_j^2); s = 0 is the L2 norm."""
    scale = SobolevScale.for_basis(f.basis, exponent)
    return float(np.sqrt(np.dot(scale.weights, f.coeffs**2)))


def dual_norm(x: CoeffVector, beta: float) -> float:
    """Norm of the negative-smoothness scale with weights (1 + lambda_j)^(-beta), beta >= 0."""
    if beta < 0:
        raise ConfigurationError("dual_norm requires beta >= 0; use sobolev_norm for positive smoothness")
    return sobolev_norm(x, -beta)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    # standard exponential partition: 0 for t<=0, 1 for t>=1, C-infinity throughout
    def ramp(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    a = ramp(t)
    b = ramp(1.0 - t)
    return a / (a + b)


@dataclass(frozen=True)
class BumpCutoff:
    """Smooth cutoff: 1 on the plateau, 0 outside the support, monotone ramps between."""

    support: tuple[float, float]
    plateau: tuple[float, float]

    def __call__(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        a, b = self.support
        p, q = self.plateau
        out = np.zeros(x.shape)
        rising = (x > a) & (x < p)
        out[rising] = _smoothstep((x[rising] - a) / (p - a))
        out[(x >= p) & (x <= q)] = 1.0
        falling = (x > q) & (x < b)
        out[falling] = _smoothstep((b - x[falling]) / (b - q))
        return out


def make_bump(support: tuple[float, float], plateau: tuple[float, float]) -> BumpCutoff:
    """Build a smooth cutoff with plateau strictly inside support strictly inside (0,1)."""
    a, b = float(support[0]), float(support[1])
    p, q = float(plateau[0]), float(plateau[1])
    if not (0.0 < a < p <= q < b < 1.0):
        raise ConfigurationError(
            "need 0 < support[0] < plateau[0] <= plateau[1] < support[1] < 1"
        )
    return BumpCutoff(support=(a, b), plateau=(p, q))


def bandlimit_approx(
    f: CoeffVector, cutoff_freq: int, zeta: BumpCutoff | None = None
) -> CoeffVector:
    """Low-pass projection to modes with |frequency| <= cutoff_freq.

    Without a cutoff function this is the exact spectral projection; with one,
    the projected function is multiplied by zeta on the grid and re-analysed,
    which accepts a small aliasing error at default oversampling.
    """
    if cutoff_freq > f.basis.n_modes:
        raise ConfigurationError("cutoff_freq exceeds the number of available modes")
    keep = np.abs(f.basis.frequencies) <= cutoff_freq
    projected = coeff_vector(f.basis, np.where(keep, f.coeffs, 0.0))
    if zeta is None:
        return projected
    values = synthesize(projected, f.basis.grid) * zeta(f.basis.grid)
    return analyze(values, f.basis)


def sobolev_draw(basis: SpectralBasis, alpha: float, seed: int) -> CoeffVector:
    """Reproducible random element of the smoothness-alpha space, unit norm.

    Coefficients (1 + lambda_j)^(-alpha/2 - 0.3) g_j with g_j iid standard
    normal, then normalised; the extra 0.3 decay keeps every truncation level
    inside the target space.
    """
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(basis.n_modes)
    c = (1.0 + basis.eigenvalues) ** (-alpha / 2.0 - 0.25 - 0.05) * g
    f = coeff_vector(basis, c)
    norm = sobolev_norm(f, alpha)
    return coeff_vector(basis, c / norm)
