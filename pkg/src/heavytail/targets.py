"""Potentials ``V`` and the heavy-tailed densities ``pi_beta ∝ V**(-beta)`` they induce.

Two closed-form families are built in:

* isotropic Student: ``V(x) = 1 + |x|^2``
* anisotropic Student: ``V(x) = 1 + x^T Sigma x`` with ``Sigma`` symmetric positive definite

For both, ``pi_beta`` is a multivariate t-distribution with ``nu = 2 beta - d``
degrees of freedom, which gives an exact sampler used as ground truth by the
rest of the package.  User-supplied potentials are also accepted; they must
declare their own smoothness constants.

Normalization convention for the anisotropic family (checked against 2-d
quadrature in the test-suite)::

    Z_beta = pi^(d/2) Gamma(beta - d/2) / (Gamma(beta) sqrt(det Sigma))

i.e. the determinant enters with exponent ``-1/2`` because ``Sigma`` here is the
*precision-like* matrix inside ``V``, not the scale matrix of the t-law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .ensemble import SampleEnsemble

ISOTROPIC = "isotropic-student"
ANISOTROPIC = "anisotropic-student"
CUSTOM = "custom"

ArrayFn = Callable[[np.ndarray], np.ndarray]


class DimensionError(ValueError):
    """Input vector length does not match the target dimension."""


class NonPositivePotentialError(ValueError):
    """A custom potential returned a value ``<= 0`` (or a non-finite one)."""


class NonNormalizableError(ValueError):
    """``V**(-beta)`` is not integrable for the requested ``(d, beta)``."""


class UnsupportedOracleError(TypeError):
    """Exact sampling / analytic law requested for a family that has none."""


@dataclass(frozen=True, eq=False)
class PotentialFamily:
    """Which potential ``V`` a target uses.

    ``sigma`` is only set for the anisotropic family; ``potential_fn`` and
    ``gradient_fn`` only for custom potentials.  Callbacks must accept arrays of
    shape ``(..., d)`` and return shape ``(...)`` and ``(..., d)`` respectively.
    """

    kind: str
    sigma: Optional[np.ndarray] = None
    potential_fn: Optional[ArrayFn] = None
    gradient_fn: Optional[ArrayFn] = None
    # lower Cholesky factor of sigma, computed once
    chol: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_student(self) -> bool:
        return self.kind in (ISOTROPIC, ANISOTROPIC)


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """Unnormalized target ``pi_beta ∝ V**(-beta)`` plus declared constants.

    Attributes:
        family: The potential family.
        d: Dimension.
        beta: Tail exponent, ``beta > 1``.
        alpha: Strong-convexity modulus of ``V``.
        lipschitz: Lipschitz constant ``L`` of ``grad V``.
        cv: Constant ``C_V`` with ``|grad V|^2 / V <= alpha * C_V``.
    """

    family: PotentialFamily
    d: int
    beta: float
    alpha: float
    lipschitz: float
    cv: float

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if not self.beta > 1:
            raise ValueError(f"beta must exceed 1, got {self.beta!r}")
        for name in ("alpha", "lipschitz", "cv"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")

    @property
    def kind(self) -> str:
        return self.family.kind

    @property
    def sigma(self) -> np.ndarray:
        """The matrix inside ``V`` (identity for the isotropic family)."""
        if self.family.kind == ANISOTROPIC:
            return self.family.sigma
        if self.family.kind == ISOTROPIC:
            return np.eye(self.d)
        raise UnsupportedOracleError("custom potentials have no sigma matrix")

    @property
    def nu(self) -> float:
        """Degrees of freedom ``2 beta - d`` of the t-law (student families)."""
        return 2.0 * self.beta - self.d

    @property
    def normalizable(self) -> bool:
        return self.beta > self.d / 2

    @property
    def finite_mean_potential(self) -> bool:
        """``E[V]`` is finite iff ``beta > d/2 + 1`` (finite variance of the t-law)."""
        return self.beta > self.d / 2 + 1

    def potential(self, x: np.ndarray) -> np.ndarray:
        return eval_potential(self, x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return eval_grad(self, x)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return log_density_unnormalized(self, x)


def isotropic_student(d: int, beta: float) -> TargetDensity:
    """``V(x) = 1 + |x|^2`` with ``alpha = L = 2`` and ``C_V = 2``."""
    return TargetDensity(PotentialFamily(ISOTROPIC), int(d), float(beta), 2.0, 2.0, 2.0)


def anisotropic_student(sigma, beta: float) -> TargetDensity:
    """``V(x) = 1 + x^T Sigma x``.

    The constants are filled in from the spectrum of ``Sigma``:
    ``alpha = 2 lambda_min``, ``L = 2 lambda_max`` and
    ``C_V = 2 lambda_max / lambda_min``.

    Raises:
        ValueError: ``sigma`` is not square, not symmetric or not positive definite.
    """
    sigma = np.array(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"sigma must be a square matrix, got shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise ValueError("sigma must be symmetric")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma must be positive definite") from exc
    sigma.setflags(write=False)
    chol.setflags(write=False)
    eig = np.linalg.eigvalsh(sigma)
    lo, hi = float(eig[0]), float(eig[-1])
    family = PotentialFamily(ANISOTROPIC, sigma=sigma, chol=chol)
    return TargetDensity(family, sigma.shape[0], float(beta), 2.0 * lo, 2.0 * hi, 2.0 * hi / lo)


def custom_target(
    potential: ArrayFn,
    gradient: ArrayFn,
    d: int,
    beta: float,
    alpha: float,
    lipschitz: float,
    cv: float,
) -> TargetDensity:
    """Target with a user-supplied potential.

    The smoothness constants are never estimated; every theory formula uses the
    values given here.
    """
    family = PotentialFamily(CUSTOM, potential_fn=potential, gradient_fn=gradient)
    return TargetDensity(family, int(d), float(beta), float(alpha), float(lipschitz), float(cv))


def _check_dim(target: TargetDensity, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != target.d:
        raise DimensionError(f"expected trailing dimension {target.d}, got shape {x.shape}")
    return x


def _sigma_x(sigma: np.ndarray, x: np.ndarray) -> np.ndarray:
    # einsum without BLAS keeps each row's result independent of the batch size
    return np.einsum("ij,...j->...i", sigma, x)


def eval_potential(target: TargetDensity, x) -> np.ndarray:
    """``V(x)`` for a single point ``(d,)`` or a batch ``(n, d)``.

    Raises:
        DimensionError: wrong trailing dimension.
        NonPositivePotentialError: a custom potential returned ``V <= 0``.
    """
    x = _check_dim(target, x)
    kind = target.family.kind
    if kind == ISOTROPIC:
        return 1.0 + np.sum(x * x, axis=-1)
    if kind == ANISOTROPIC:
        return 1.0 + np.sum(x * _sigma_x(target.family.sigma, x), axis=-1)
    v = np.asarray(target.family.potential_fn(x), dtype=float)
    if not np.all(v > 0):
        raise NonPositivePotentialError(f"custom potential must be positive, got min {np.min(v)!r}")
    return v


def eval_grad(target: TargetDensity, x) -> np.ndarray:
    """``grad V(x)``: ``2x`` (isotropic), ``2 Sigma x`` (anisotropic), or the callback."""
    x = _check_dim(target, x)
    kind = target.family.kind
    if kind == ISOTROPIC:
        return 2.0 * x
    if kind == ANISOTROPIC:
        return 2.0 * _sigma_x(target.family.sigma, x)
    g = np.asarray(target.family.gradient_fn(x), dtype=float)
    if g.shape != x.shape:
        raise DimensionError(f"custom gradient returned shape {g.shape}, expected {x.shape}")
    return g


def log_density_unnormalized(target: TargetDensity, x) -> np.ndarray:
    """``-beta * log V(x)``."""
    return -target.beta * np.log(eval_potential(target, x))


def log_normalization_isotropic(d: int, beta: float) -> float:
    """``log Z_beta`` for ``V = 1 + |x|^2``; see :func:`normalization_isotropic`."""
    if not beta > d / 2:
        raise NonNormalizableError(f"(1+|x|^2)^(-beta) is not integrable for beta={beta} <= d/2={d / 2}")
    half_d = d / 2.0
    log_beta_fn = gammaln(half_d) + gammaln(beta - half_d) - gammaln(beta)
    return half_d * math.log(math.pi) + log_beta_fn - gammaln(half_d)


def normalization_isotropic(d: int, beta: float) -> float:
    """``Z_beta = pi^(d/2) B(d/2, beta - d/2) / Gamma(d/2)``, evaluated in log space."""
    return math.exp(log_normalization_isotropic(d, beta))


def normalization_anisotropic(d: int, beta: float, sigma) -> float:
    """``Z_beta = ∫ (1 + x^T Sigma x)^(-beta) dx``.

    Equal to the isotropic constant divided by ``sqrt(det Sigma)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (d, d):
        raise DimensionError(f"sigma must have shape {(d, d)}, got {sigma.shape}")
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise ValueError("sigma must be positive definite")
    return math.exp(log_normalization_isotropic(d, beta) - 0.5 * logdet)


def _chi_square(nu: float, n: int, rng: np.random.Generator) -> np.ndarray:
    # integer dof: literal sum of squared normals; otherwise Gamma(nu/2, scale=2)
    k = round(nu)
    if abs(nu - k) < 1e-12 and k >= 1:
        w = np.zeros(n)
        for _ in range(k):
            z = rng.standard_normal(n)
            w += z * z
        return w
    return rng.gamma(nu / 2.0, 2.0, size=n)


def reference_sample(target: TargetDensity, n: int, rng: np.random.Generator) -> SampleEnsemble:
    """Exact i.i.d. draws from a Student-family ``pi_beta``.

    Uses ``X = z / sqrt(w / nu)`` with ``nu = 2 beta - d``,
    ``z ~ N(0, Sigma^{-1} / nu)`` and ``w ~ chi^2_nu`` independent.  Under this
    law ``u = x^T Sigma x / (1 + x^T Sigma x)`` is ``Beta(d/2, beta - d/2)``.

    Raises:
        UnsupportedOracleError: custom potential.
        NonNormalizableError: ``beta <= d/2``.
    """
    if not target.family.is_student:
        raise UnsupportedOracleError("exact sampling is only available for the Student families")
    if not target.normalizable:
        raise NonNormalizableError(f"beta={target.beta} <= d/2={target.d / 2}")
    d, nu = target.d, target.nu
    eps = rng.standard_normal((n, d))
    if target.family.kind == ANISOTROPIC:
        # Sigma = C C^T  =>  C^{-T} eps has covariance Sigma^{-1}
        eps = np.linalg.solve(target.family.chol.T, eps.T).T
    z = eps / math.sqrt(nu)
    w = _chi_square(nu, n, rng)
    x = z / np.sqrt(w / nu)[:, None]
    return SampleEnsemble(k=0, states=x, lineage="reference")
